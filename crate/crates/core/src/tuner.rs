//! Gradient-free tuning of solver schedules against a training set:
//! a constrained parameter codec, the MSE training loss, SPSA and
//! one-dimensional grid sweeps.

use std::fmt::Write as _;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::acquisition::{make_vds_mask, AcquisitionOperator, KSpaceData};
use crate::error::{Error, Result};
use crate::phantom::{make_phantom, PhantomSpec};
use crate::prox::{sigmoid, AttentionMode, AttentionParams, SparseThreshold, ThresholdMode};
use crate::solvers::{csa_final_image, fmt_f64, IterationParams, ScheduleParams, SolverSchedule};
use crate::tensor::{dims_str, DynamicImage};

#[derive(Clone, Debug)]
pub struct TrainingPair {
    pub truth: DynamicImage,
    pub kspace: KSpaceData,
    pub op: AcquisitionOperator,
}

#[derive(Clone, Debug)]
pub struct TrainingSet {
    pairs: Vec<TrainingPair>,
}

impl TrainingSet {
    pub fn new(pairs: Vec<TrainingPair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::param("training set", "must contain at least one pair"));
        }
        for p in &pairs {
            if p.truth.dims() != p.op.image_dims() {
                return Err(Error::dims(dims_str(p.op.image_dims()), dims_str(p.truth.dims())));
            }
            let (c, h, w, t) = p.kspace.dims();
            if c != p.op.coils() || (h, w, t) != p.op.image_dims() {
                return Err(Error::dims(
                    format!("{}x{}", p.op.coils(), dims_str(p.op.image_dims())),
                    format!("{c}x{}", dims_str((h, w, t))),
                ));
            }
        }
        Ok(Self { pairs })
    }

    /// Noiseless single-coil pairs: phantoms with seeds `seed, seed+1, …`
    /// under vds masks with the same seeds.
    pub fn phantom_suite(base: &PhantomSpec, count: usize, accel: f64, seed: u64) -> Result<Self> {
        let pairs = (0..count as u64)
            .map(|i| {
                let spec = base.clone().with_seed(seed + i);
                let truth = make_phantom(&spec)?;
                let mask = make_vds_mask(spec.height, spec.width, spec.frames, accel, seed + i)?;
                let op = AcquisitionOperator::new(mask, None)?;
                let kspace = op.forward(&truth)?;
                Ok(TrainingPair { truth, kspace, op })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(pairs)
    }

    pub fn pairs(&self) -> &[TrainingPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn softplus(r: f64) -> f64 {
    if r > 30.0 {
        r + (-r).exp().ln_1p()
    } else {
        r.exp().ln_1p()
    }
}

fn inv_softplus(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp_m1()).ln()
    } else {
        y.exp_m1().ln()
    }
}

fn logit(y: f64) -> f64 {
    (y / (1.0 - y)).ln()
}

/// Unconstrained encoding of a schedule's numeric parameters.
///
/// Each parameter block (one for a shared schedule, one per iteration
/// otherwise) holds `μ` (softplus), the low-rank threshold (raw `th` in
/// relative mode, softplus in absolute mode), the sparse parameters
/// (softplus for an absolute threshold or `α`, raw fc weights), `ω₁`
/// (sigmoid, `ω₂ = 1 − ω₁`) and `t` (sigmoid). Modes, transforms, sizes
/// and the acceleration kind come from the template at decode time.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
}

fn encode_block(p: &IterationParams, out: &mut Vec<f64>) {
    out.push(inv_softplus(p.mu));
    out.push(match p.lr_threshold.mode {
        ThresholdMode::Absolute => inv_softplus(p.lr_threshold.value),
        ThresholdMode::SigmaMaxRelative => p.lr_threshold.value,
    });
    match &p.sp_threshold {
        SparseThreshold::Absolute(tau) => out.push(inv_softplus(*tau)),
        SparseThreshold::Attention(a) => match a.mode {
            AttentionMode::EnergyProportional => out.push(inv_softplus(a.alpha)),
            AttentionMode::FcAttention => {
                out.extend(a.fc1_weights.iter());
                out.extend(a.fc1_bias.iter());
                out.extend(a.fc2_weights.iter());
                out.extend(a.fc2_bias.iter());
            }
        },
    }
    out.push(logit(p.omega1));
    out.push(logit(p.t));
}

fn block_len(p: &IterationParams) -> usize {
    let sp = match &p.sp_threshold {
        SparseThreshold::Absolute(_) => 1,
        SparseThreshold::Attention(a) => match a.mode {
            AttentionMode::EnergyProportional => 1,
            AttentionMode::FcAttention => 2 * a.channels * a.hidden + a.hidden + a.channels,
        },
    };
    4 + sp
}

fn decode_block(template: &IterationParams, v: &[f64]) -> IterationParams {
    let mut p = template.clone();
    p.mu = softplus(v[0]).max(f64::MIN_POSITIVE);
    p.lr_threshold.value = match p.lr_threshold.mode {
        ThresholdMode::Absolute => softplus(v[1]),
        ThresholdMode::SigmaMaxRelative => v[1],
    };
    let mut k = 2;
    match &mut p.sp_threshold {
        SparseThreshold::Absolute(tau) => {
            *tau = softplus(v[k]);
            k += 1;
        }
        SparseThreshold::Attention(a) => match a.mode {
            AttentionMode::EnergyProportional => {
                a.alpha = softplus(v[k]);
                k += 1;
            }
            AttentionMode::FcAttention => {
                let (c, h) = (a.channels, a.hidden);
                a.fc1_weights = Array2::from_shape_vec((h, c), v[k..k + h * c].to_vec()).expect("block length");
                k += h * c;
                a.fc1_bias = Array1::from(v[k..k + h].to_vec());
                k += h;
                a.fc2_weights = Array2::from_shape_vec((c, h), v[k..k + c * h].to_vec()).expect("block length");
                k += c * h;
                a.fc2_bias = Array1::from(v[k..k + c].to_vec());
                k += c;
            }
        },
    }
    p.omega1 = sigmoid(v[k]);
    p.t = sigmoid(v[k + 1]);
    p
}

fn blocks(s: &SolverSchedule) -> Vec<&IterationParams> {
    match &s.params {
        ScheduleParams::Shared(p) => vec![p],
        ScheduleParams::PerIteration(list) => list.iter().collect(),
    }
}

impl ParamVector {
    pub fn encode(schedule: &SolverSchedule) -> Self {
        let mut values = Vec::new();
        for p in blocks(schedule) {
            encode_block(p, &mut values);
        }
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Schedule with `template`'s structure and this vector's values.
    pub fn decode(&self, template: &SolverSchedule) -> Result<SolverSchedule> {
        let bl = blocks(template);
        let expected: usize = bl.iter().map(|p| block_len(p)).sum();
        if expected != self.values.len() {
            return Err(Error::dims(format!("{expected} parameters"), format!("{}", self.values.len())));
        }
        if self.values.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("parameter vector"));
        }
        let mut k = 0;
        let mut decoded = Vec::with_capacity(bl.len());
        for p in bl {
            let n = block_len(p);
            decoded.push(decode_block(p, &self.values[k..k + n]));
            k += n;
        }
        let params = match template.params {
            ScheduleParams::Shared(_) => ScheduleParams::Shared(decoded.pop().expect("one block")),
            ScheduleParams::PerIteration(_) => ScheduleParams::PerIteration(decoded),
        };
        Ok(SolverSchedule {
            iterations: template.iterations,
            params,
            acceleration: template.acceleration,
        })
    }
}

/// `Σ ‖𝒳_GT − x̂‖²` over the training set, where `x̂` is the schedule's
/// reconstruction.
pub fn mse_loss(schedule: &SolverSchedule, train: &TrainingSet) -> Result<f64> {
    let mut total = 0.0;
    for pair in &train.pairs {
        let x = csa_final_image(&pair.kspace, &pair.op, schedule)?;
        total += x.lin_comb(1.0, &pair.truth, -1.0)?.norm_sqr();
    }
    Ok(total)
}

/// SPSA gain settings: `a_k = a/(k + A)^alpha`, `c_k = c/k^gamma`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpsaGains {
    pub a: f64,
    pub c: f64,
    /// Stability constant `A`; `None` uses 10% of the budget.
    pub stability: Option<f64>,
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for SpsaGains {
    fn default() -> Self {
        Self {
            a: 0.05,
            c: 0.1,
            stability: None,
            alpha: 0.602,
            gamma: 0.101,
        }
    }
}

impl SpsaGains {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tuner.a", self.a), ("tuner.c", self.c), ("tuner.alpha", self.alpha), ("tuner.gamma", self.gamma)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(name, format!("{v} must be positive")));
            }
        }
        if let Some(s) = self.stability {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(Error::param("tuner.stability", format!("{s} must be nonnegative")));
            }
        }
        Ok(())
    }
}

/// One SPSA step. Losses are training-set MSE values; a skipped step has
/// `None` for the probes that were not finite.
#[derive(Clone, Debug, PartialEq)]
pub struct SpsaStep {
    pub step: usize,
    pub loss_plus: Option<f64>,
    pub loss_minus: Option<f64>,
    pub loss: Option<f64>,
    pub best_loss: f64,
    pub skipped: bool,
}

#[derive(Clone, Debug)]
pub struct TuneResult {
    pub schedule: SolverSchedule,
    pub init_loss: f64,
    pub best_loss: f64,
    pub trace: Vec<SpsaStep>,
}

impl TuneResult {
    pub const CSV_HEADER: &'static str = "step,loss_plus,loss_minus,loss,best_loss,skipped";

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        let _ = writeln!(out, "0,,,{},{},false", fmt_f64(self.init_loss), fmt_f64(self.init_loss));
        for s in &self.trace {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                s.step,
                opt(s.loss_plus),
                opt(s.loss_minus),
                opt(s.loss),
                fmt_f64(s.best_loss),
                s.skipped
            );
        }
        out
    }
}

fn finite_loss(theta: &ParamVector, template: &SolverSchedule, train: &TrainingSet) -> Option<(SolverSchedule, f64)> {
    let schedule = theta.decode(template).ok()?;
    schedule.validate().ok()?;
    let loss = mse_loss(&schedule, train).ok()?;
    loss.is_finite().then_some((schedule, loss))
}

/// Consecutive non-finite steps tolerated before aborting.
pub const MAX_CONSECUTIVE_SKIPS: usize = 10;

/// Simultaneous-perturbation stochastic approximation over the
/// [`ParamVector`] encoding of `init`. Each step probes `θ ± c_k Δ` with a
/// seeded Rademacher `Δ`, moves `θ ← θ − a_k (L₊ − L₋)/(2c_k) Δ` on the
/// loss normalized by the initial loss, and evaluates the new `θ`. The
/// best schedule seen (including `init`) is returned.
///
/// A step whose probes or update give a non-finite loss is undone and
/// halves `c` for the remaining steps; ten such steps in a row abort.
pub fn spsa_tune(
    init: &SolverSchedule,
    train: &TrainingSet,
    budget: usize,
    seed: u64,
    gains: &SpsaGains,
) -> Result<TuneResult> {
    if budget == 0 {
        return Err(Error::param("tuner.budget", "must be at least 1"));
    }
    gains.validate()?;
    init.validate()?;
    let init_loss = mse_loss(init, train)?;
    if !init_loss.is_finite() {
        return Err(Error::NonFinite("initial training loss"));
    }
    let scale = if init_loss > 0.0 { init_loss } else { 1.0 };
    let stability = gains.stability.unwrap_or(0.1 * budget as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = ParamVector::encode(init);
    let mut best = (init.clone(), init_loss);
    let mut c_factor = 1.0;
    let mut consecutive = 0;
    let mut trace = Vec::with_capacity(budget);
    for k in 1..=budget {
        let a_k = gains.a / (k as f64 + stability).powf(gains.alpha);
        let c_k = c_factor * gains.c / (k as f64).powf(gains.gamma);
        let delta: Vec<f64> = (0..theta.len())
            .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let probe = |sign: f64| ParamVector {
            values: theta.values.iter().zip(&delta).map(|(t, d)| t + sign * c_k * d).collect(),
        };
        let plus = finite_loss(&probe(1.0), init, train).map(|(_, l)| l);
        let minus = finite_loss(&probe(-1.0), init, train).map(|(_, l)| l);
        let mut step = SpsaStep {
            step: k,
            loss_plus: plus,
            loss_minus: minus,
            loss: None,
            best_loss: best.1,
            skipped: true,
        };
        let updated = match (plus, minus) {
            (Some(lp), Some(lm)) => {
                let g = (lp - lm) / scale / (2.0 * c_k);
                let next = ParamVector {
                    values: theta.values.iter().zip(&delta).map(|(t, d)| t - a_k * g * d).collect(),
                };
                finite_loss(&next, init, train).map(|(s, l)| (next, s, l))
            }
            _ => None,
        };
        match updated {
            Some((next, schedule, loss)) => {
                consecutive = 0;
                theta = next;
                if loss < best.1 {
                    best = (schedule, loss);
                }
                step.loss = Some(loss);
                step.best_loss = best.1;
                step.skipped = false;
            }
            None => {
                consecutive += 1;
                c_factor *= 0.5;
                if consecutive >= MAX_CONSECUTIVE_SKIPS {
                    return Err(Error::TunerAborted(consecutive));
                }
            }
        }
        trace.push(step);
    }
    Ok(TuneResult {
        schedule: best.0,
        init_loss,
        best_loss: best.1,
        trace,
    })
}

/// Parameter swept by [`grid_tune`]; the value is set in every iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridParam {
    Mu,
    LrThreshold,
    /// Absolute sparse threshold, or `α` in energy-proportional AST.
    SpThreshold,
    Omega1,
    T,
}

impl GridParam {
    pub const NAMES: &'static [&'static str] = &["mu", "lr.threshold", "sp.threshold", "omega1", "t"];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mu" => Some(GridParam::Mu),
            "lr.threshold" => Some(GridParam::LrThreshold),
            "sp.threshold" => Some(GridParam::SpThreshold),
            "omega1" => Some(GridParam::Omega1),
            "t" => Some(GridParam::T),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        Self::NAMES[self as usize]
    }

    fn set(self, p: &mut IterationParams, value: f64) -> Result<()> {
        match self {
            GridParam::Mu => p.mu = value,
            GridParam::LrThreshold => p.lr_threshold.value = value,
            GridParam::SpThreshold => match &mut p.sp_threshold {
                SparseThreshold::Absolute(tau) => *tau = value,
                SparseThreshold::Attention(AttentionParams {
                    mode: AttentionMode::EnergyProportional,
                    alpha,
                    ..
                }) => *alpha = value,
                SparseThreshold::Attention(_) => {
                    return Err(Error::param("sp.threshold", "fc-attention has no scalar threshold to sweep"))
                }
            },
            GridParam::Omega1 => p.omega1 = value,
            GridParam::T => p.t = value,
        }
        Ok(())
    }
}

/// Returns the schedule with the lowest loss over `grid` (first on ties)
/// and the full `(value, loss)` table.
pub fn grid_tune(
    init: &SolverSchedule,
    train: &TrainingSet,
    param: GridParam,
    grid: &[f64],
) -> Result<(SolverSchedule, Vec<(f64, f64)>)> {
    if grid.is_empty() {
        return Err(Error::param("grid", "must not be empty"));
    }
    let mut table = Vec::with_capacity(grid.len());
    let mut best: Option<(SolverSchedule, f64)> = None;
    for &value in grid {
        let mut s = init.clone();
        match &mut s.params {
            ScheduleParams::Shared(p) => param.set(p, value)?,
            ScheduleParams::PerIteration(list) => list.iter_mut().try_for_each(|p| param.set(p, value))?,
        }
        s.validate()?;
        let loss = mse_loss(&s, train)?;
        table.push((value, loss));
        if best.as_ref().is_none_or(|(_, l)| loss < *l) {
            best = Some((s, loss));
        }
    }
    Ok((best.expect("grid is non-empty").0, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::Channelization;
    use crate::solvers::Acceleration;
    use crate::tensor::TransformSpec;

    #[test]
    fn softplus_round_trip() {
        for y in [1e-8, 0.01, 0.5, 1.0, 3.0, 29.0, 31.0, 200.0] {
            let back = softplus(inv_softplus(y));
            assert!((back - y).abs() <= 1e-12 * y.max(1.0), "{y} -> {back}");
        }
        assert_eq!(softplus(inv_softplus(0.0)), 0.0);
    }

    #[test]
    fn sigmoid_extremes_round_trip() {
        assert_eq!(sigmoid(logit(0.0)), 0.0);
        assert_eq!(sigmoid(logit(1.0)), 1.0);
    }

    #[test]
    fn codec_round_trip_for_every_sparse_mode() {
        let mut fc = AttentionParams::fc_zero(2, 3, Channelization::Frames);
        fc.fc1_weights[[1, 0]] = 0.7;
        fc.fc2_bias[1] = -0.2;
        for sp in [
            SparseThreshold::Absolute(0.03),
            SparseThreshold::Attention(AttentionParams::energy(1, 0.4, Channelization::Single)),
            SparseThreshold::Attention(fc),
        ] {
            let mut p = IterationParams::absolute(0.8, 0.1, 0.0, 0.3, TransformSpec::dct());
            p.sp_threshold = sp;
            p.t = 0.25;
            let s = SolverSchedule::shared(4, p, Acceleration::LearnedT).to_per_iteration();
            let v = ParamVector::encode(&s);
            let back = v.decode(&s).unwrap();
            let again = ParamVector::encode(&back);
            for (a, b) in v.values.iter().zip(&again.values) {
                assert!(a == b || (a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
            back.validate().unwrap();
        }
    }

    #[test]
    fn decode_rejects_wrong_length() {
        let s = SolverSchedule::default();
        let mut v = ParamVector::encode(&s);
        v.values.push(0.0);
        assert!(v.decode(&s).is_err());
    }
}
