//! Dense complex H×W×T tensors and unitary transforms along the temporal mode.
//!
//! Storage is row-major with the frame index fastest, so every temporal
//! fibre `x[h, w, ..]` is contiguous. Frontal slices `x[.., .., t]` are the
//! H×W matrices the t-SVD machinery operates on.

use std::fmt;
use std::sync::Arc;

use ndarray::{s, Array2, Array3, Axis, Zip};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// A complex dynamic image of shape `height × width × frames`.
#[derive(Clone, PartialEq)]
pub struct DynamicImage {
    data: Array3<Complex64>,
}

impl fmt::Debug for DynamicImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (h, w, t) = self.dims();
        write!(f, "DynamicImage({h}x{w}x{t}, |x|_F = {:.6e})", self.norm())
    }
}

impl DynamicImage {
    /// Wraps an array, rejecting empty shapes and non-finite entries.
    pub fn new(data: Array3<Complex64>) -> Result<Self> {
        let (h, w, t) = data.dim();
        if h == 0 || w == 0 || t == 0 {
            return Err(Error::dims("positive dimensions", format!("{h}x{w}x{t}")));
        }
        if !data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite("dynamic image"));
        }
        Ok(Self::from_array_unchecked(data))
    }

    /// Skips the finiteness scan. Callers inside the crate use this on
    /// arrays they produced themselves from valid inputs.
    pub(crate) fn from_array_unchecked(data: Array3<Complex64>) -> Self {
        let data = if data.is_standard_layout() {
            data
        } else {
            data.as_standard_layout().into_owned()
        };
        Self { data }
    }

    pub fn zeros(height: usize, width: usize, frames: usize) -> Self {
        assert!(height > 0 && width > 0 && frames > 0, "empty image shape");
        Self {
            data: Array3::zeros((height, width, frames)),
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        frames: usize,
        f: impl FnMut((usize, usize, usize)) -> Complex64,
    ) -> Result<Self> {
        Self::new(Array3::from_shape_fn((height, width, frames), f))
    }

    /// Builds a real-valued image.
    pub fn from_real(data: &Array3<f64>) -> Result<Self> {
        Self::new(data.mapv(|v| Complex64::new(v, 0.0)))
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    pub fn frames(&self) -> usize {
        self.data.dim().2
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &Array3<Complex64> {
        &self.data
    }

    pub fn into_data(self) -> Array3<Complex64> {
        self.data
    }

    pub fn as_slice(&self) -> &[Complex64] {
        self.data.as_slice().expect("standard layout")
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `⟨self, other⟩ = Σ self · conj(other)`.
    pub fn inner(&self, other: &DynamicImage) -> Result<Complex64> {
        self.check_same_dims(other)?;
        Ok(self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b.conj())
            .sum())
    }

    pub fn magnitude(&self) -> Array3<f64> {
        self.data.mapv(|z| z.norm())
    }

    /// `alpha·self + beta·other`.
    pub fn lin_comb(&self, alpha: f64, other: &DynamicImage, beta: f64) -> Result<DynamicImage> {
        self.check_same_dims(other)?;
        let mut out = self.data.clone();
        Zip::from(&mut out)
            .and(&other.data)
            .for_each(|a, &b| *a = *a * alpha + b * beta);
        Ok(Self::from_array_unchecked(out))
    }

    pub fn scaled(&self, alpha: Complex64) -> DynamicImage {
        Self::from_array_unchecked(self.data.mapv(|z| z * alpha))
    }

    pub fn check_same_dims(&self, other: &DynamicImage) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::dims(dims_str(self.dims()), dims_str(other.dims())));
        }
        Ok(())
    }

    /// Copy of frontal slice `x[.., .., index]`.
    pub fn frontal_slice(&self, index: usize) -> Result<Array2<Complex64>> {
        if index >= self.frames() {
            return Err(Error::IndexOutOfRange {
                what: "frames",
                index,
                len: self.frames(),
            });
        }
        Ok(self.data.slice(s![.., .., index]).to_owned())
    }

    /// Stacks H×W slices along the frame axis.
    pub fn from_frontal_slices(slices: &[Array2<Complex64>]) -> Result<DynamicImage> {
        let first = slices
            .first()
            .ok_or_else(|| Error::dims("at least one slice", "none"))?;
        let (h, w) = first.dim();
        let mut data = Array3::zeros((h, w, slices.len()));
        for (i, slice) in slices.iter().enumerate() {
            if slice.dim() != (h, w) {
                return Err(Error::dims(
                    format!("{h}x{w}"),
                    format!("{}x{}", slice.dim().0, slice.dim().1),
                ));
            }
            data.slice_mut(s![.., .., i]).assign(slice);
        }
        DynamicImage::new(data)
    }
}

pub(crate) fn dims_str((h, w, t): (usize, usize, usize)) -> String {
    format!("{h}x{w}x{t}")
}

/// Free-function form of [`DynamicImage::frontal_slice`].
pub fn frontal_slice(x: &DynamicImage, index: usize) -> Result<Array2<Complex64>> {
    x.frontal_slice(index)
}

/// Transform families available along the temporal mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TransformKind {
    Identity,
    /// Unitary DFT along mode 3, `e^{-2πi kt/T} / √T`.
    DftMode3,
    /// Orthonormal DCT-II along mode 3. Complex data is transformed as real
    /// and imaginary parts independently.
    DctMode3,
}

impl TransformKind {
    pub const ALL: [TransformKind; 3] = [
        TransformKind::Identity,
        TransformKind::DftMode3,
        TransformKind::DctMode3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransformKind::Identity => "identity",
            TransformKind::DftMode3 => "dft",
            TransformKind::DctMode3 => "dct",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(TransformKind::Identity),
            "dft" | "unitary-dft-mode3" => Some(TransformKind::DftMode3),
            "dct" | "unitary-dct-mode3" => Some(TransformKind::DctMode3),
            _ => None,
        }
    }
}

/// A unitary transform along the temporal mode. Normalization is always
/// unitary, so `inverse` is the adjoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TransformSpec {
    pub kind: TransformKind,
}

impl Default for TransformSpec {
    fn default() -> Self {
        Self::identity()
    }
}

impl TransformSpec {
    pub const fn new(kind: TransformKind) -> Self {
        Self { kind }
    }

    pub const fn identity() -> Self {
        Self::new(TransformKind::Identity)
    }

    pub const fn dft() -> Self {
        Self::new(TransformKind::DftMode3)
    }

    pub const fn dct() -> Self {
        Self::new(TransformKind::DctMode3)
    }

    pub fn is_identity(&self) -> bool {
        self.kind == TransformKind::Identity
    }

    pub fn apply(&self, x: &DynamicImage) -> DynamicImage {
        let mut data = x.data().clone();
        self.apply_in_place(&mut data, Direction::Forward);
        DynamicImage::from_array_unchecked(data)
    }

    pub fn inverse(&self, y: &DynamicImage) -> DynamicImage {
        let mut data = y.data().clone();
        self.apply_in_place(&mut data, Direction::Inverse);
        DynamicImage::from_array_unchecked(data)
    }

    /// Transforms a standard-layout H×W×T array in place.
    pub(crate) fn apply_in_place(&self, data: &mut Array3<Complex64>, dir: Direction) {
        let frames = data.dim().2;
        match self.kind {
            TransformKind::Identity => {}
            TransformKind::DftMode3 => {
                let fft = temporal_fft(frames, dir);
                let buf = data
                    .as_slice_mut()
                    .expect("transforms require standard layout");
                fft.process(buf);
                let scale = 1.0 / (frames as f64).sqrt();
                buf.iter_mut().for_each(|z| *z *= scale);
            }
            TransformKind::DctMode3 => {
                let basis = dct_basis(frames);
                let mut scratch = vec![Complex64::new(0.0, 0.0); frames];
                for mut fibre in data.lanes_mut(Axis(2)) {
                    for (k, out) in scratch.iter_mut().enumerate() {
                        *out = match dir {
                            Direction::Forward => (0..frames).map(|n| fibre[n] * basis[[k, n]]).sum(),
                            Direction::Inverse => (0..frames).map(|n| fibre[n] * basis[[n, k]]).sum(),
                        };
                    }
                    fibre.iter_mut().zip(&scratch).for_each(|(f, s)| *f = *s);
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Direction {
    Forward,
    Inverse,
}

fn temporal_fft(len: usize, dir: Direction) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    match dir {
        Direction::Forward => planner.plan_fft_forward(len),
        Direction::Inverse => planner.plan_fft_inverse(len),
    }
}

/// Orthonormal DCT-II matrix, row `k` is the `k`-th basis vector.
pub fn dct_basis(len: usize) -> Array2<f64> {
    let n = len as f64;
    Array2::from_shape_fn((len, len), |(k, t)| {
        let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        scale * (std::f64::consts::PI * (t as f64 + 0.5) * k as f64 / n).cos()
    })
}

pub fn transform_apply(spec: TransformSpec, x: &DynamicImage) -> DynamicImage {
    spec.apply(x)
}

pub fn transform_inverse(spec: TransformSpec, y: &DynamicImage) -> DynamicImage {
    spec.inverse(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize, t: usize) -> DynamicImage {
        DynamicImage::from_fn(h, w, t, |_| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
        .unwrap()
    }

    fn rel_err(a: &DynamicImage, b: &DynamicImage) -> f64 {
        a.lin_comb(1.0, b, -1.0).unwrap().norm() / b.norm().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn identity_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_image(&mut rng, 3, 5, 4);
        let spec = TransformSpec::identity();
        assert_eq!(spec.apply(&x), x);
        assert_eq!(spec.inverse(&x), x);
    }

    #[test]
    fn dft_of_constant_signal_concentrates_in_first_slice() {
        let frames = 6;
        let v = Complex64::new(0.5, -1.25);
        let x = DynamicImage::from_fn(3, 4, frames, |_| v).unwrap();
        let y = TransformSpec::dft().apply(&x);
        let expected = v * (frames as f64).sqrt();
        for ((_, _, t), z) in y.data().indexed_iter() {
            if t == 0 {
                assert!((z - expected).norm() < 1e-12);
            } else {
                assert!(z.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn dct_of_constant_signal_concentrates_in_first_slice() {
        let x = DynamicImage::from_fn(2, 2, 5, |_| Complex64::new(2.0, 1.0)).unwrap();
        let y = TransformSpec::dct().apply(&x);
        assert!((y.data()[[0, 0, 0]] - Complex64::new(2.0, 1.0) * 5f64.sqrt()).norm() < 1e-12);
        assert!(y.data()[[1, 1, 3]].norm() < 1e-12);
    }

    #[test]
    fn unitary_transforms_round_trip_and_preserve_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for kind in TransformKind::ALL {
            let spec = TransformSpec::new(kind);
            let x = random_image(&mut rng, 8, 8, 6);
            let y = spec.apply(&x);
            assert!(((y.norm() - x.norm()) / x.norm()).abs() < 1e-12, "{kind:?}");
            assert!(rel_err(&spec.inverse(&y), &x) < 1e-12, "{kind:?}");
        }
    }

    #[test]
    fn zero_maps_to_zero() {
        let z = DynamicImage::zeros(4, 3, 5);
        for kind in TransformKind::ALL {
            let spec = TransformSpec::new(kind);
            assert_eq!(spec.inverse(&z).norm(), 0.0);
            assert_eq!(spec.apply(&z).norm(), 0.0);
        }
    }

    #[test]
    fn frontal_slices_round_trip_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_image(&mut rng, 5, 7, 4);
        let first = x.frontal_slice(0).unwrap();
        assert_eq!(first[[2, 3]], x.data()[[2, 3, 0]]);
        let slices: Vec<_> = (0..4).map(|i| frontal_slice(&x, i).unwrap()).collect();
        assert_eq!(DynamicImage::from_frontal_slices(&slices).unwrap(), x);
        assert!(matches!(
            x.frontal_slice(4),
            Err(Error::IndexOutOfRange { index: 4, len: 4, .. })
        ));
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        let mut a = Array3::zeros((2, 2, 2));
        a[[0, 1, 1]] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(DynamicImage::new(a), Err(Error::NonFinite(_))));
        assert!(DynamicImage::new(Array3::zeros((0, 2, 2))).is_err());
    }

    #[test]
    fn inner_product_is_conjugate_linear_in_second_argument() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_image(&mut rng, 2, 3, 2);
        let y = random_image(&mut rng, 2, 3, 2);
        let i = Complex64::new(0.0, 1.0);
        let lhs = x.inner(&y.scaled(i)).unwrap();
        let rhs = x.inner(&y).unwrap() * (-i);
        assert!((lhs - rhs).norm() < 1e-12);
        assert!((x.inner(&x).unwrap().re - x.norm_sqr()).abs() < 1e-12);
    }
}
