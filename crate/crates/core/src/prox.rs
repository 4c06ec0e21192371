//! Proximal operators and regularizer values: singular value thresholding
//! per frontal slice, complex soft thresholding, and attention-based
//! per-channel soft thresholding.

use nalgebra::{DMatrix, SVD};
use ndarray::{s, Array1, Array2, Array3, Array4, ArrayBase, Axis, Data, Dimension};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::{Direction, DynamicImage, TransformSpec};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn to_nalgebra(m: &Array2<Complex64>) -> DMatrix<Complex64> {
    let (r, c) = m.dim();
    DMatrix::from_fn(r, c, |i, j| m[[i, j]])
}

fn from_nalgebra(m: &DMatrix<Complex64>) -> Array2<Complex64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

struct Decomposition {
    u: DMatrix<Complex64>,
    sigma: Vec<f64>,
    v_t: DMatrix<Complex64>,
}

fn decompose(m: DMatrix<Complex64>) -> Result<Decomposition> {
    if !m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::Svd("non-finite input matrix".into()));
    }
    let svd = SVD::try_new(m, true, true, f64::EPSILON, 0).ok_or_else(|| Error::Svd("did not converge".into()))?;
    Ok(Decomposition {
        u: svd.u.expect("requested"),
        sigma: svd.singular_values.iter().copied().collect(),
        v_t: svd.v_t.expect("requested"),
    })
}

fn singular_values(m: DMatrix<Complex64>) -> Result<Vec<f64>> {
    if !m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::Svd("non-finite input matrix".into()));
    }
    let svd = SVD::try_new(m, false, false, f64::EPSILON, 0).ok_or_else(|| Error::Svd("did not converge".into()))?;
    Ok(svd.singular_values.iter().copied().collect())
}

/// `U · diag(shrunk) · Vᴴ`, skipping zeroed components.
fn recompose(d: &Decomposition, shrunk: &[f64]) -> DMatrix<Complex64> {
    let keep: Vec<usize> = (0..shrunk.len()).filter(|&k| shrunk[k] > 0.0).collect();
    let (rows, cols) = (d.u.nrows(), d.v_t.ncols());
    if keep.is_empty() {
        return DMatrix::zeros(rows, cols);
    }
    let us = DMatrix::from_fn(rows, keep.len(), |i, j| d.u[(i, keep[j])] * shrunk[keep[j]]);
    let vt = DMatrix::from_fn(keep.len(), cols, |i, j| d.v_t[(keep[i], j)]);
    us * vt
}

fn shrink(sigma: &[f64], tau: f64) -> Vec<f64> {
    sigma.iter().map(|&s| (s - tau).max(0.0)).collect()
}

fn check_threshold(name: &'static str, tau: f64) -> Result<()> {
    if tau.is_nan() || tau < 0.0 {
        return Err(Error::param(name, format!("threshold {tau} must be nonnegative")));
    }
    Ok(())
}

/// Singular value thresholding, the prox of `tau·‖·‖_*`.
pub fn svt_matrix(m: &Array2<Complex64>, tau: f64) -> Result<Array2<Complex64>> {
    check_threshold("tau", tau)?;
    let d = decompose(to_nalgebra(m))?;
    Ok(from_nalgebra(&recompose(&d, &shrink(&d.sigma, tau))))
}

/// Matrix nuclear norm.
pub fn nuclear_norm(m: &Array2<Complex64>) -> Result<f64> {
    Ok(singular_values(to_nalgebra(m))?.iter().sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ThresholdMode {
    /// Per-slice threshold `value / omega`.
    Absolute,
    /// Per-slice threshold `sigmoid(value) · σ_max / omega`, with `σ_max` the
    /// slice's largest singular value.
    SigmaMaxRelative,
}

impl ThresholdMode {
    pub fn name(self) -> &'static str {
        match self {
            ThresholdMode::Absolute => "absolute",
            ThresholdMode::SigmaMaxRelative => "sigma-max-relative",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "absolute" => Some(ThresholdMode::Absolute),
            "sigma-max-relative" | "relative" => Some(ThresholdMode::SigmaMaxRelative),
            _ => None,
        }
    }
}

/// Low-rank threshold setting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdSpec {
    pub mode: ThresholdMode,
    pub value: f64,
}

impl ThresholdSpec {
    pub fn absolute(value: f64) -> Self {
        Self {
            mode: ThresholdMode::Absolute,
            value,
        }
    }

    pub fn relative(th: f64) -> Self {
        Self {
            mode: ThresholdMode::SigmaMaxRelative,
            value: th,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            ThresholdMode::Absolute => check_threshold("lr_threshold", self.value),
            ThresholdMode::SigmaMaxRelative if self.value.is_nan() => {
                Err(Error::param("lr_threshold", "th must not be NaN"))
            }
            ThresholdMode::SigmaMaxRelative => Ok(()),
        }
    }

    /// Threshold for one slice given its largest singular value.
    pub fn slice_threshold(&self, sigma_max: f64, omega: f64) -> f64 {
        match self.mode {
            ThresholdMode::Absolute => self.value / omega,
            ThresholdMode::SigmaMaxRelative => sigmoid(self.value) * sigma_max / omega,
        }
    }
}

fn check_omega(name: &'static str, omega: f64) -> Result<()> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::param(name, format!("{omega} must be positive")));
    }
    Ok(())
}

/// `Tᴴ ∘ SVT ∘ T`: transform along time, threshold every frontal slice,
/// transform back.
pub fn svt_tensor(x: &DynamicImage, transform: TransformSpec, thr: &ThresholdSpec, omega1: f64) -> Result<DynamicImage> {
    thr.validate()?;
    check_omega("omega1", omega1)?;
    let mut y = x.data().clone();
    transform.apply_in_place(&mut y, Direction::Forward);
    for i in 0..y.dim().2 {
        let slice = y.slice(s![.., .., i]).to_owned();
        let d = decompose(to_nalgebra(&slice))?;
        let sigma_max = d.sigma.iter().copied().fold(0.0, f64::max);
        let tau = thr.slice_threshold(sigma_max, omega1);
        let out = recompose(&d, &shrink(&d.sigma, tau));
        let mut dst = y.slice_mut(s![.., .., i]);
        for ((r, c), v) in dst.indexed_iter_mut() {
            *v = out[(r, c)];
        }
    }
    transform.apply_in_place(&mut y, Direction::Inverse);
    Ok(DynamicImage::from_array_unchecked(y))
}

/// Transformed tensor nuclear norm: summed nuclear norms of the frontal
/// slices of `T(x)`.
pub fn ttnn(x: &DynamicImage, transform: TransformSpec) -> Result<f64> {
    let y = transform.apply(x);
    let mut total = 0.0;
    for i in 0..y.frames() {
        total += singular_values(to_nalgebra(&y.frontal_slice(i)?))?.iter().sum::<f64>();
    }
    Ok(total)
}

#[inline]
pub fn soft_threshold_scalar(z: Complex64, tau: f64) -> Complex64 {
    let mag = z.norm();
    if mag <= tau {
        ZERO
    } else {
        z * ((mag - tau) / mag)
    }
}

/// Elementwise complex soft thresholding, the prox of `tau·‖·‖₁`.
pub fn soft_threshold(x: &DynamicImage, tau: f64) -> Result<DynamicImage> {
    check_threshold("tau", tau)?;
    Ok(DynamicImage::from_array_unchecked(x.data().mapv(|z| soft_threshold_scalar(z, tau))))
}

/// Sum of complex magnitudes.
pub fn l1_norm<S, D>(x: &ArrayBase<S, D>) -> f64
where
    S: Data<Elem = Complex64>,
    D: Dimension,
{
    x.iter().map(|z| z.norm()).sum()
}

pub fn l1_norm_image(x: &DynamicImage) -> f64 {
    l1_norm(x.data())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AttentionMode {
    /// `w = sigmoid(fc2(relu(fc1(f))))`.
    FcAttention,
    /// `w = alpha · 1`.
    EnergyProportional,
}

/// How a transform-domain H×W×T tensor is split into attention channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Channelization {
    /// Each transform-domain frame is a channel.
    Frames,
    /// The whole tensor is one channel.
    Single,
}

impl Channelization {
    pub fn name(self) -> &'static str {
        match self {
            Channelization::Frames => "frames",
            Channelization::Single => "single",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "frames" => Some(Channelization::Frames),
            "single" => Some(Channelization::Single),
            _ => None,
        }
    }

    pub fn channel_count(self, frames: usize) -> usize {
        match self {
            Channelization::Frames => frames,
            Channelization::Single => 1,
        }
    }
}

/// Parameters of the attention-based soft thresholding operator.
///
/// The fully connected layers map `channels → hidden → channels`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub mode: AttentionMode,
    pub channels: usize,
    pub hidden: usize,
    pub fc1_weights: Array2<f64>,
    pub fc1_bias: Array1<f64>,
    pub fc2_weights: Array2<f64>,
    pub fc2_bias: Array1<f64>,
    pub alpha: f64,
    pub channelization: Channelization,
}

impl AttentionParams {
    /// Default hidden width of the attention layers.
    pub const DEFAULT_HIDDEN: usize = 16;

    pub fn energy(channels: usize, alpha: f64, channelization: Channelization) -> Self {
        let mut p = Self::fc_zero(channels, Self::DEFAULT_HIDDEN, channelization);
        p.mode = AttentionMode::EnergyProportional;
        p.alpha = alpha;
        p
    }

    /// Fully connected mode with every weight and bias zero, so each
    /// attention weight is `sigmoid(0) = 1/2`.
    pub fn fc_zero(channels: usize, hidden: usize, channelization: Channelization) -> Self {
        Self {
            mode: AttentionMode::FcAttention,
            channels,
            hidden,
            fc1_weights: Array2::zeros((hidden, channels)),
            fc1_bias: Array1::zeros(hidden),
            fc2_weights: Array2::zeros((channels, hidden)),
            fc2_bias: Array1::zeros(channels),
            alpha: 0.0,
            channelization,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (c, h) = (self.channels, self.hidden);
        if c == 0 {
            return Err(Error::param("attention.channels", "must be positive"));
        }
        if self.fc1_weights.dim() != (h, c)
            || self.fc1_bias.len() != h
            || self.fc2_weights.dim() != (c, h)
            || self.fc2_bias.len() != c
        {
            return Err(Error::dims(
                format!("fc layers {c}->{h}->{c}"),
                format!(
                    "fc1 {:?} + {}, fc2 {:?} + {}",
                    self.fc1_weights.dim(),
                    self.fc1_bias.len(),
                    self.fc2_weights.dim(),
                    self.fc2_bias.len()
                ),
            ));
        }
        if self.mode == AttentionMode::EnergyProportional && (self.alpha.is_nan() || self.alpha < 0.0) {
            return Err(Error::param("attention.alpha", format!("{} must be nonnegative", self.alpha)));
        }
        Ok(())
    }

    /// Attention weights `w` for pooled channel magnitudes `f`.
    pub fn weights(&self, pooled: &[f64]) -> Vec<f64> {
        match self.mode {
            AttentionMode::EnergyProportional => vec![self.alpha; pooled.len()],
            AttentionMode::FcAttention => {
                let f = Array1::from(pooled.to_vec());
                let hidden = (self.fc1_weights.dot(&f) + &self.fc1_bias).mapv(|v| v.max(0.0));
                (self.fc2_weights.dot(&hidden) + &self.fc2_bias)
                    .mapv(sigmoid)
                    .to_vec()
            }
        }
    }

    /// Per-channel thresholds `τ = w ⊙ f`.
    pub fn thresholds(&self, pooled: &[f64]) -> Vec<f64> {
        self.weights(pooled).iter().zip(pooled).map(|(w, f)| w * f).collect()
    }
}

fn check_channels(params: &AttentionParams, found: usize) -> Result<()> {
    params.validate()?;
    if params.channels != found {
        return Err(Error::dims(format!("{} channels", params.channels), format!("{found} channels")));
    }
    Ok(())
}

/// Per-channel thresholds `τ` of an `Nc × H × W × T` channel tensor (global
/// average pooling of magnitudes over H, W and T).
pub fn ast_thresholds(channels: &Array4<Complex64>, params: &AttentionParams) -> Result<Vec<f64>> {
    check_channels(params, channels.dim().0)?;
    let pooled: Vec<f64> = channels
        .outer_iter()
        .map(|c| l1_norm(&c) / c.len() as f64)
        .collect();
    Ok(params.thresholds(&pooled))
}

/// Attention-based soft thresholding of an `Nc × H × W × T` tensor:
/// channel `i` is soft-thresholded at `τᵢ / omega2`.
pub fn ast(channels: &Array4<Complex64>, params: &AttentionParams, omega2: f64) -> Result<Array4<Complex64>> {
    check_omega("omega2", omega2)?;
    let tau = ast_thresholds(channels, params)?;
    let mut out = channels.clone();
    for (mut c, t) in out.outer_iter_mut().zip(&tau) {
        let thr = t / omega2;
        c.mapv_inplace(|z| soft_threshold_scalar(z, thr));
    }
    Ok(out)
}

/// AST applied to an H×W×T tensor split per `params.channelization`.
pub fn ast_image(x: &DynamicImage, params: &AttentionParams, omega2: f64) -> Result<DynamicImage> {
    check_omega("omega2", omega2)?;
    let mut data = x.data().clone();
    ast_in_place(&mut data, params, omega2)?;
    Ok(DynamicImage::from_array_unchecked(data))
}

pub(crate) fn ast_in_place(data: &mut Array3<Complex64>, params: &AttentionParams, omega2: f64) -> Result<()> {
    let frames = data.dim().2;
    match params.channelization {
        Channelization::Single => {
            check_channels(params, 1)?;
            let pooled = l1_norm(&*data) / data.len() as f64;
            let thr = params.thresholds(&[pooled])[0] / omega2;
            data.mapv_inplace(|z| soft_threshold_scalar(z, thr));
        }
        Channelization::Frames => {
            check_channels(params, frames)?;
            let pooled: Vec<f64> = data
                .axis_iter(Axis(2))
                .map(|f| l1_norm(&f) / f.len() as f64)
                .collect();
            let tau = params.thresholds(&pooled);
            for (mut f, t) in data.axis_iter_mut(Axis(2)).zip(&tau) {
                let thr = t / omega2;
                f.mapv_inplace(|z| soft_threshold_scalar(z, thr));
            }
        }
    }
    Ok(())
}

/// Sparse-branch threshold: a single absolute ST threshold or AST.
#[derive(Clone, Debug, PartialEq)]
pub enum SparseThreshold {
    Absolute(f64),
    Attention(AttentionParams),
}

impl SparseThreshold {
    pub fn validate(&self) -> Result<()> {
        match self {
            SparseThreshold::Absolute(tau) => check_threshold("sp_threshold", *tau),
            SparseThreshold::Attention(p) => p.validate(),
        }
    }
}

/// `Dᴴ ∘ ST ∘ D` (or AST in place of ST), with thresholds divided by `omega2`.
pub fn sparse_prox(x: &DynamicImage, transform: TransformSpec, thr: &SparseThreshold, omega2: f64) -> Result<DynamicImage> {
    check_omega("omega2", omega2)?;
    let mut y = x.data().clone();
    transform.apply_in_place(&mut y, Direction::Forward);
    match thr {
        SparseThreshold::Absolute(tau) => {
            check_threshold("sp_threshold", *tau)?;
            let t = tau / omega2;
            y.mapv_inplace(|z| soft_threshold_scalar(z, t));
        }
        SparseThreshold::Attention(p) => ast_in_place(&mut y, p, omega2)?,
    }
    transform.apply_in_place(&mut y, Direction::Inverse);
    Ok(DynamicImage::from_array_unchecked(y))
}

/// `‖D x‖₁`.
pub fn transformed_l1(x: &DynamicImage, transform: TransformSpec) -> f64 {
    l1_norm(transform.apply(x).data())
}
