use std::sync::Arc;

use ndarray::{s, Array3, Array4, Zip};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::{Fft, FftPlanner};

use super::mask::SamplingMask;
use crate::error::{Error, Result};
use crate::tensor::{dims_str, DynamicImage};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Per-coil complex sensitivity maps, shape `coils × height × width`,
/// shared by every frame.
#[derive(Clone, Debug, PartialEq)]
pub struct CoilSensitivities {
    maps: Array3<Complex64>,
}

impl CoilSensitivities {
    pub const NORMALIZATION_TOL: f64 = 1e-6;

    /// Accepts maps whose squared magnitudes sum to one at every pixel of
    /// the support region (pixels where the sum is zero lie outside it).
    pub fn new(maps: Array3<Complex64>) -> Result<Self> {
        let (c, h, w) = maps.dim();
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::dims("positive coil map dimensions", format!("{c}x{h}x{w}")));
        }
        if !maps.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite("coil sensitivities"));
        }
        for y in 0..h {
            for x in 0..w {
                let energy: f64 = maps.slice(s![.., y, x]).iter().map(|z| z.norm_sqr()).sum();
                if energy != 0.0 && (energy - 1.0).abs() > Self::NORMALIZATION_TOL {
                    return Err(Error::param(
                        "csm",
                        format!("sum of squared magnitudes is {energy} at pixel ({y}, {x})"),
                    ));
                }
            }
        }
        Ok(Self {
            maps: maps.as_standard_layout().into_owned(),
        })
    }

    /// Rescales raw maps pixelwise so their squared magnitudes sum to one.
    pub fn normalized(mut maps: Array3<Complex64>) -> Result<Self> {
        let (_, h, w) = maps.dim();
        for y in 0..h {
            for x in 0..w {
                let mut column = maps.slice_mut(s![.., y, x]);
                let energy: f64 = column.iter().map(|z| z.norm_sqr()).sum();
                if energy > 0.0 {
                    let scale = 1.0 / energy.sqrt();
                    column.iter_mut().for_each(|z| *z *= scale);
                }
            }
        }
        Self::new(maps)
    }

    pub fn coils(&self) -> usize {
        self.maps.dim().0
    }

    pub fn maps(&self) -> &Array3<Complex64> {
        &self.maps
    }

    pub fn spatial_dims(&self) -> (usize, usize) {
        let (_, h, w) = self.maps.dim();
        (h, w)
    }
}

/// Multi-coil k-space samples, shape `coils × height × width × frames`, in
/// centered order (DC at `(height/2, width/2)`). Entries outside the mask
/// are exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct KSpaceData {
    samples: Array4<Complex64>,
}

impl KSpaceData {
    /// Validates shape against the mask and that unsampled entries are zero.
    pub fn new(samples: Array4<Complex64>, mask: &SamplingMask) -> Result<Self> {
        let (c, h, w, t) = samples.dim();
        if (h, w, t) != mask.dims() || c == 0 {
            return Err(Error::dims(
                format!("Cx{}", dims_str(mask.dims())),
                format!("{c}x{}", dims_str((h, w, t))),
            ));
        }
        if !samples.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite("k-space"));
        }
        for ((_, y, x, f), z) in samples.indexed_iter() {
            if !mask.get(y, x, f) && *z != ZERO {
                return Err(Error::param("kspace", format!("nonzero sample at unsampled location ({y}, {x}, {f})")));
            }
        }
        Ok(Self {
            samples: samples.as_standard_layout().into_owned(),
        })
    }

    /// Zeroes unsampled entries, then wraps.
    pub fn masked(mut samples: Array4<Complex64>, mask: &SamplingMask) -> Result<Self> {
        let (_, h, w, t) = samples.dim();
        if (h, w, t) == mask.dims() {
            for mut coil in samples.outer_iter_mut() {
                Zip::from(&mut coil).and(mask.bits()).for_each(|z, &keep| {
                    if !keep {
                        *z = ZERO;
                    }
                });
            }
        }
        Self::new(samples, mask)
    }

    pub fn samples(&self) -> &Array4<Complex64> {
        &self.samples
    }

    pub fn into_samples(self) -> Array4<Complex64> {
        self.samples
    }

    pub fn coils(&self) -> usize {
        self.samples.dim().0
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        self.samples.dim()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `⟨self, other⟩ = Σ self · conj(other)`.
    pub fn inner(&self, other: &KSpaceData) -> Result<Complex64> {
        if self.dims() != other.dims() {
            return Err(Error::dims(format!("{:?}", self.dims()), format!("{:?}", other.dims())));
        }
        Ok(self
            .samples
            .iter()
            .zip(other.samples.iter())
            .map(|(a, b)| a * b.conj())
            .sum())
    }
}

struct Fft2 {
    rows_fwd: Arc<dyn Fft<f64>>,
    rows_inv: Arc<dyn Fft<f64>>,
    cols_fwd: Arc<dyn Fft<f64>>,
    cols_inv: Arc<dyn Fft<f64>>,
    height: usize,
    width: usize,
}

impl Fft2 {
    fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows_fwd: planner.plan_fft_forward(width),
            rows_inv: planner.plan_fft_inverse(width),
            cols_fwd: planner.plan_fft_forward(height),
            cols_inv: planner.plan_fft_inverse(height),
            height,
            width,
        }
    }

    /// Unitary 2-D DFT of a row-major `height × width` buffer.
    fn process(&self, buf: &mut [Complex64], scratch: &mut [Complex64], inverse: bool) {
        let (h, w) = (self.height, self.width);
        let (rows, cols) = if inverse {
            (&self.rows_inv, &self.cols_inv)
        } else {
            (&self.rows_fwd, &self.cols_fwd)
        };
        rows.process(buf);
        transpose(buf, scratch, h, w);
        cols.process(scratch);
        transpose(scratch, buf, w, h);
        let scale = 1.0 / ((h * w) as f64).sqrt();
        buf.iter_mut().for_each(|z| *z *= scale);
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

/// The acquisition operator `A = M ∘ F ∘ S`: coil weighting, unitary 2-D
/// spatial DFT per frame, k-space masking.
pub struct AcquisitionOperator {
    mask: SamplingMask,
    csm: Option<CoilSensitivities>,
    fft: Fft2,
}

impl std::fmt::Debug for AcquisitionOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AcquisitionOperator")
            .field("dims", &self.mask.dims())
            .field("pattern", &self.mask.pattern)
            .field("coils", &self.coils())
            .finish()
    }
}

impl Clone for AcquisitionOperator {
    fn clone(&self) -> Self {
        Self::new(self.mask.clone(), self.csm.clone()).expect("already validated")
    }
}

impl AcquisitionOperator {
    pub fn new(mask: SamplingMask, csm: Option<CoilSensitivities>) -> Result<Self> {
        let (h, w, _) = mask.dims();
        if let Some(csm) = &csm {
            if csm.spatial_dims() != (h, w) {
                let (ch, cw) = csm.spatial_dims();
                return Err(Error::dims(format!("{h}x{w} coil maps"), format!("{ch}x{cw}")));
            }
        }
        Ok(Self {
            fft: Fft2::new(h, w),
            mask,
            csm,
        })
    }

    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    pub fn csm(&self) -> Option<&CoilSensitivities> {
        self.csm.as_ref()
    }

    pub fn coils(&self) -> usize {
        self.csm.as_ref().map_or(1, |c| c.coils())
    }

    pub fn image_dims(&self) -> (usize, usize, usize) {
        self.mask.dims()
    }

    fn check_image(&self, x: &DynamicImage) -> Result<()> {
        if x.dims() != self.image_dims() {
            return Err(Error::dims(dims_str(self.image_dims()), dims_str(x.dims())));
        }
        Ok(())
    }

    fn check_kspace(&self, b: &KSpaceData) -> Result<()> {
        let (h, w, t) = self.image_dims();
        let expected = (self.coils(), h, w, t);
        if b.dims() != expected {
            return Err(Error::dims(format!("{expected:?}"), format!("{:?}", b.dims())));
        }
        Ok(())
    }

    /// Coil image of `frame` for coil `c`, row-major.
    fn coil_frame(&self, x: &Array3<Complex64>, c: usize, frame: usize, out: &mut [Complex64]) {
        let (h, w, _) = self.image_dims();
        let img = x.slice(s![.., .., frame]);
        match &self.csm {
            None => {
                for (o, v) in out.iter_mut().zip(img.iter()) {
                    *o = *v;
                }
            }
            Some(csm) => {
                let map = csm.maps.slice(s![c, .., ..]);
                for y in 0..h {
                    for x_ in 0..w {
                        out[y * w + x_] = img[[y, x_]] * map[[y, x_]];
                    }
                }
            }
        }
    }

    /// Writes the masked, centered k-space of one coil frame into `dst`.
    fn to_kspace(&self, buf: &mut [Complex64], scratch: &mut [Complex64], frame: usize, mut dst: ndarray::ArrayViewMut2<Complex64>) {
        let (h, w, _) = self.image_dims();
        self.fft.process(buf, scratch, false);
        for ky in 0..h {
            let sy = (ky + h / 2) % h;
            for kx in 0..w {
                let sx = (kx + w / 2) % w;
                dst[[sy, sx]] = if self.mask.get(sy, sx, frame) { buf[ky * w + kx] } else { ZERO };
            }
        }
    }

    /// Zero-fills and un-centers one coil frame of k-space into `buf`, then
    /// inverse transforms it.
    fn from_kspace(&self, src: ndarray::ArrayView2<Complex64>, frame: usize, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        let (h, w, _) = self.image_dims();
        for ky in 0..h {
            let sy = (ky + h / 2) % h;
            for kx in 0..w {
                let sx = (kx + w / 2) % w;
                buf[ky * w + kx] = if self.mask.get(sy, sx, frame) { src[[sy, sx]] } else { ZERO };
            }
        }
        self.fft.process(buf, scratch, true);
    }

    fn accumulate_coil(&self, buf: &[Complex64], c: usize, frame: usize, out: &mut Array3<Complex64>) {
        let (h, w, _) = self.image_dims();
        let mut dst = out.slice_mut(s![.., .., frame]);
        match &self.csm {
            None => {
                for y in 0..h {
                    for x in 0..w {
                        dst[[y, x]] += buf[y * w + x];
                    }
                }
            }
            Some(csm) => {
                let map = csm.maps.slice(s![c, .., ..]);
                for y in 0..h {
                    for x in 0..w {
                        dst[[y, x]] += buf[y * w + x] * map[[y, x]].conj();
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &DynamicImage) -> Result<KSpaceData> {
        self.check_image(x)?;
        let (h, w, t) = self.image_dims();
        let mut out = Array4::zeros((self.coils(), h, w, t));
        let mut buf = vec![ZERO; h * w];
        let mut scratch = vec![ZERO; h * w];
        for frame in 0..t {
            for c in 0..self.coils() {
                self.coil_frame(x.data(), c, frame, &mut buf);
                self.to_kspace(&mut buf, &mut scratch, frame, out.slice_mut(s![c, .., .., frame]));
            }
        }
        Ok(KSpaceData { samples: out })
    }

    pub fn adjoint(&self, b: &KSpaceData) -> Result<DynamicImage> {
        self.check_kspace(b)?;
        let (h, w, t) = self.image_dims();
        let mut out = Array3::zeros((h, w, t));
        let mut buf = vec![ZERO; h * w];
        let mut scratch = vec![ZERO; h * w];
        for frame in 0..t {
            for c in 0..self.coils() {
                self.from_kspace(b.samples.slice(s![c, .., .., frame]), frame, &mut buf, &mut scratch);
                self.accumulate_coil(&buf, c, frame, &mut out);
            }
        }
        Ok(DynamicImage::from_array_unchecked(out))
    }

    /// `Aᴴ(A x − b)`, the gradient of `½‖A x − b‖²`, together with the
    /// fidelity value at `x`.
    pub fn gradient(&self, x: &DynamicImage, b: &KSpaceData) -> Result<(DynamicImage, f64)> {
        self.check_image(x)?;
        self.check_kspace(b)?;
        let (h, w, t) = self.image_dims();
        let mut out = Array3::zeros((h, w, t));
        let mut buf = vec![ZERO; h * w];
        let mut scratch = vec![ZERO; h * w];
        let mut residual = ndarray::Array2::zeros((h, w));
        let mut fidelity = 0.0;
        for frame in 0..t {
            for c in 0..self.coils() {
                self.coil_frame(x.data(), c, frame, &mut buf);
                self.to_kspace(&mut buf, &mut scratch, frame, residual.view_mut());
                Zip::from(&mut residual)
                    .and(b.samples.slice(s![c, .., .., frame]))
                    .for_each(|r, &bv| *r -= bv);
                fidelity += residual.iter().map(|z| z.norm_sqr()).sum::<f64>();
                self.from_kspace(residual.view(), frame, &mut buf, &mut scratch);
                self.accumulate_coil(&buf, c, frame, &mut out);
            }
        }
        Ok((DynamicImage::from_array_unchecked(out), 0.5 * fidelity))
    }

    /// `½‖A x − b‖²`.
    pub fn fidelity(&self, x: &DynamicImage, b: &KSpaceData) -> Result<f64> {
        let ax = self.forward(x)?;
        self.check_kspace(b)?;
        Ok(0.5
            * ax.samples
                .iter()
                .zip(b.samples.iter())
                .map(|(a, bv)| (a - bv).norm_sqr())
                .sum::<f64>())
    }

    /// `AᴴA x`.
    pub fn normal(&self, x: &DynamicImage) -> Result<DynamicImage> {
        self.adjoint(&self.forward(x)?)
    }

    /// Per-coil images `S_c x`, shape `coils × H × W × T`.
    pub fn coil_images(&self, x: &DynamicImage) -> Result<Array4<Complex64>> {
        self.check_image(x)?;
        let (h, w, t) = self.image_dims();
        let mut out = Array4::zeros((self.coils(), h, w, t));
        for c in 0..self.coils() {
            let mut coil = out.slice_mut(s![c, .., .., ..]);
            match &self.csm {
                None => coil.assign(x.data()),
                Some(csm) => {
                    for ((y, xx, f), v) in x.data().indexed_iter() {
                        coil[[y, xx, f]] = v * csm.maps[[c, y, xx]];
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Root-sum-of-squares combination over the leading coil axis.
pub fn rss_combine(coil_images: &Array4<Complex64>) -> Array3<f64> {
    let (_, h, w, t) = coil_images.dim();
    let mut out = Array3::zeros((h, w, t));
    for coil in coil_images.outer_iter() {
        Zip::from(&mut out).and(&coil).for_each(|o, z| *o += z.norm_sqr());
    }
    out.mapv_inplace(f64::sqrt);
    out
}

/// Adds complex white Gaussian noise to the sampled entries so that
/// `10·log10(‖b‖² / ‖n‖²)` is `snr_db` in expectation.
pub fn add_noise(b: &KSpaceData, mask: &SamplingMask, snr_db: f64, seed: u64) -> Result<KSpaceData> {
    if !snr_db.is_finite() {
        return Err(Error::param("snr_db", "must be finite"));
    }
    let sampled = mask.sampled_count() * b.coils();
    let signal_power = b.norm_sqr() / sampled as f64;
    let noise_var = signal_power / 10f64.powf(snr_db / 10.0);
    let normal = Normal::new(0.0, (noise_var / 2.0).sqrt()).map_err(|e| Error::param("snr_db", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = b.samples.clone();
    for ((_, y, x, f), z) in samples.indexed_iter_mut() {
        if mask.get(y, x, f) {
            *z += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
        }
    }
    KSpaceData::new(samples, mask)
}
