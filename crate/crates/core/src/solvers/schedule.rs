use crate::error::{Error, Result};
use crate::prox::{AttentionParams, Channelization, SparseThreshold, ThresholdMode, ThresholdSpec};
use crate::tensor::TransformSpec;

/// Parameters of one iteration of the composite splitting loop.
///
/// Thresholds already include the step size: an absolute low-rank value
/// is `μλ₁` and an absolute sparse value is `μλ₂`.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationParams {
    pub mu: f64,
    pub lr_threshold: ThresholdSpec,
    pub sp_threshold: SparseThreshold,
    pub omega1: f64,
    /// Momentum coefficient used by [`Acceleration::LearnedT`].
    pub t: f64,
    pub lr_transform: TransformSpec,
    pub sp_transform: TransformSpec,
}

impl Default for IterationParams {
    fn default() -> Self {
        Self::new_default()
    }
}

impl IterationParams {
    pub const DEFAULT_LR_THRESHOLD: f64 = 0.1;
    pub const DEFAULT_SP_ALPHA: f64 = 0.5;

    /// Absolute SVT threshold, energy-proportional AST over a single
    /// channel, equal weights, DFT along time.
    pub fn new_default() -> Self {
        Self {
            mu: 1.0,
            lr_threshold: ThresholdSpec::absolute(Self::DEFAULT_LR_THRESHOLD),
            sp_threshold: SparseThreshold::Attention(AttentionParams::energy(
                1,
                Self::DEFAULT_SP_ALPHA,
                Channelization::Single,
            )),
            omega1: 0.5,
            t: 0.0,
            lr_transform: TransformSpec::dft(),
            sp_transform: TransformSpec::dft(),
        }
    }

    /// Absolute thresholds on both branches.
    pub fn absolute(mu: f64, lr: f64, sp: f64, omega1: f64, transform: TransformSpec) -> Self {
        Self {
            mu,
            lr_threshold: ThresholdSpec::absolute(lr),
            sp_threshold: SparseThreshold::Absolute(sp),
            omega1,
            t: 0.0,
            lr_transform: transform,
            sp_transform: transform,
        }
    }

    pub fn omega2(&self) -> f64 {
        1.0 - self.omega1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(Error::param("mu", format!("{} must be positive", self.mu)));
        }
        if !(0.0..=1.0).contains(&self.omega1) {
            return Err(Error::param("omega1", format!("{} not in [0, 1]", self.omega1)));
        }
        if !(0.0..=1.0).contains(&self.t) {
            return Err(Error::param("t", format!("{} not in [0, 1]", self.t)));
        }
        self.lr_threshold.validate()?;
        self.sp_threshold.validate()
    }

    /// Regularizer weights `(λ₁, λ₂)` of the composite objective. A branch
    /// with zero weight or an adaptive threshold contributes nothing.
    pub fn objective_weights(&self) -> (f64, f64) {
        let lr = match self.lr_threshold.mode {
            ThresholdMode::Absolute if self.omega1 > 0.0 => self.lr_threshold.value / self.mu,
            _ => 0.0,
        };
        let sp = match self.sp_threshold {
            SparseThreshold::Absolute(tau) if self.omega2() > 0.0 => tau / self.mu,
            _ => 0.0,
        };
        (lr, sp)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Acceleration {
    None,
    AnalyticNesterov,
    LearnedT,
}

impl Acceleration {
    pub const NAMES: &'static [&'static str] = &["none", "analytic-nesterov", "learned-t"];

    pub fn name(self) -> &'static str {
        match self {
            Acceleration::None => "none",
            Acceleration::AnalyticNesterov => "analytic-nesterov",
            Acceleration::LearnedT => "learned-t",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Acceleration::None),
            "analytic-nesterov" => Some(Acceleration::AnalyticNesterov),
            "learned-t" => Some(Acceleration::LearnedT),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScheduleParams {
    Shared(IterationParams),
    PerIteration(Vec<IterationParams>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverSchedule {
    pub iterations: usize,
    pub params: ScheduleParams,
    pub acceleration: Acceleration,
}

/// `(1 + √(1 + 4t²)) / 2`.
pub fn nesterov_t_next(t: f64) -> f64 {
    (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0
}

/// Momentum coefficients `(tₙ − 1)/tₙ₊₁` for `n = 1..=iterations`, with `t₁ = 1`.
pub fn nesterov_coefficients(iterations: usize) -> Vec<f64> {
    let mut t = 1.0;
    (0..iterations)
        .map(|_| {
            let next = nesterov_t_next(t);
            let coef = (t - 1.0) / next;
            t = next;
            coef
        })
        .collect()
}

impl Default for SolverSchedule {
    fn default() -> Self {
        Self::new_default()
    }
}

impl SolverSchedule {
    pub const DEFAULT_ITERATIONS: usize = 15;

    pub fn shared(iterations: usize, params: IterationParams, acceleration: Acceleration) -> Self {
        Self {
            iterations,
            params: ScheduleParams::Shared(params),
            acceleration,
        }
    }

    pub fn per_iteration(params: Vec<IterationParams>, acceleration: Acceleration) -> Self {
        Self {
            iterations: params.len(),
            params: ScheduleParams::PerIteration(params),
            acceleration,
        }
    }

    pub fn new_default() -> Self {
        Self::shared(
            Self::DEFAULT_ITERATIONS,
            IterationParams::default(),
            Acceleration::AnalyticNesterov,
        )
    }

    /// Parameters of iteration `n`, zero-based.
    pub fn params(&self, n: usize) -> &IterationParams {
        match &self.params {
            ScheduleParams::Shared(p) => p,
            ScheduleParams::PerIteration(list) => &list[n],
        }
    }

    pub fn is_per_iteration(&self) -> bool {
        matches!(self.params, ScheduleParams::PerIteration(_))
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::param("iterations", "must be positive"));
        }
        match &self.params {
            ScheduleParams::Shared(p) => p.validate(),
            ScheduleParams::PerIteration(list) => {
                if list.len() != self.iterations {
                    return Err(Error::dims(
                        format!("{} per-iteration entries", self.iterations),
                        format!("{} entries", list.len()),
                    ));
                }
                list.iter().try_for_each(IterationParams::validate)
            }
        }
    }

    /// Momentum coefficient applied after iteration `n` (zero-based).
    pub(crate) fn momentum(&self, n: usize, nesterov: &[f64]) -> Option<f64> {
        match self.acceleration {
            Acceleration::None => None,
            Acceleration::AnalyticNesterov => Some(nesterov[n]),
            Acceleration::LearnedT => Some(self.params(n).t),
        }
    }

    /// Equivalent per-iteration schedule in learned-t form: analytic
    /// Nesterov coefficients are written into each entry's `t`, and no
    /// acceleration becomes `t = 0`.
    pub fn to_per_iteration(&self) -> Self {
        let nesterov = nesterov_coefficients(self.iterations);
        let list = (0..self.iterations)
            .map(|n| {
                let mut p = self.params(n).clone();
                p.t = match self.acceleration {
                    Acceleration::None => 0.0,
                    Acceleration::AnalyticNesterov => nesterov[n],
                    Acceleration::LearnedT => p.t,
                };
                p
            })
            .collect();
        Self::per_iteration(list, Acceleration::LearnedT)
    }
}

/// Parameters of the SLR-ADMM embedded algorithm.
#[derive(Clone, Debug, PartialEq)]
pub struct SlrAdmmParams {
    pub rho: f64,
    pub eta: f64,
    pub mu: f64,
    /// `λ₁`; the 𝒯-update thresholds at `λ₁/ρ`.
    pub lr_threshold: ThresholdSpec,
    /// Sparse-prox threshold of the inner steps, `μλ₂`.
    pub sp_threshold: SparseThreshold,
    pub lr_transform: TransformSpec,
    pub sp_transform: TransformSpec,
    pub iterations: usize,
    pub inner_ista_steps: usize,
    /// Threshold the 𝒯-update at `μλ₁/ρ` instead of `λ₁/ρ`.
    pub threshold_includes_mu: bool,
}

impl Default for SlrAdmmParams {
    fn default() -> Self {
        Self::new_default()
    }
}

impl SlrAdmmParams {
    pub const DEFAULT_RHO: f64 = 0.5;
    pub const DEFAULT_ETA: f64 = 1.0;

    /// Defaults matching the shared default schedule's thresholds.
    pub fn new_default() -> Self {
        let p = IterationParams::default();
        Self {
            rho: Self::DEFAULT_RHO,
            eta: Self::DEFAULT_ETA,
            mu: p.mu,
            lr_threshold: p.lr_threshold,
            sp_threshold: p.sp_threshold,
            lr_transform: p.lr_transform,
            sp_transform: p.sp_transform,
            iterations: SolverSchedule::DEFAULT_ITERATIONS,
            inner_ista_steps: 1,
            threshold_includes_mu: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rho", self.rho), ("eta", self.eta), ("mu", self.mu)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(name, format!("{v} must be positive")));
            }
        }
        if self.iterations == 0 {
            return Err(Error::param("iterations", "must be positive"));
        }
        if self.inner_ista_steps == 0 {
            return Err(Error::param("inner_ista_steps", "must be positive"));
        }
        self.lr_threshold.validate()?;
        self.sp_threshold.validate()
    }

    /// Divisor applied to `λ₁` in the 𝒯-update.
    pub(crate) fn t_update_divisor(&self) -> f64 {
        if self.threshold_includes_mu {
            self.rho / self.mu
        } else {
            self.rho
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nesterov_closed_forms() {
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((nesterov_t_next(1.0) - golden).abs() < 1e-15);
        // golden² = golden + 1, so the next value is (1 + √(5 + 4·golden)) / 2.
        assert!((nesterov_t_next(golden) - (1.0 + (5.0 + 4.0 * golden).sqrt()) / 2.0).abs() < 1e-14);
        assert!((nesterov_t_next(golden) - 2.19353).abs() < 1e-5);
        let mut t = 1.0;
        for _ in 0..50 {
            let next = nesterov_t_next(t);
            assert!(next > t);
            t = next;
        }
    }

    #[test]
    fn nesterov_coefficients_lie_in_unit_interval() {
        let c = nesterov_coefficients(30);
        assert_eq!(c[0], 0.0);
        assert!(c.iter().all(|&v| (0.0..1.0).contains(&v)));
        assert!(c.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn validation() {
        assert!(IterationParams::default().validate().is_ok());
        let mut p = IterationParams::default();
        p.mu = 0.0;
        assert!(p.validate().is_err());
        let mut p = IterationParams::default();
        p.omega1 = 1.5;
        assert!(p.validate().is_err());
        let mut p = IterationParams::default();
        p.t = -0.1;
        assert!(p.validate().is_err());

        let mut s = SolverSchedule::per_iteration(vec![IterationParams::default(); 3], Acceleration::LearnedT);
        assert!(s.validate().is_ok());
        s.iterations = 4;
        assert!(matches!(s.validate(), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn omega2_is_complement() {
        let mut p = IterationParams::default();
        p.omega1 = 0.3;
        assert_eq!(p.omega1 + p.omega2(), 1.0);
    }

    #[test]
    fn expansion_carries_nesterov_coefficients() {
        let s = SolverSchedule::default();
        let e = s.to_per_iteration();
        assert_eq!(e.acceleration, Acceleration::LearnedT);
        let c = nesterov_coefficients(s.iterations);
        for n in 0..s.iterations {
            assert_eq!(e.params(n).t, c[n]);
        }
    }
}
