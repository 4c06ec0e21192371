//! Synthetic dynamic phantoms and coil sensitivity maps.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::acquisition::CoilSensitivities;
use crate::error::{Error, Result};
use crate::tensor::{dct_basis, DynamicImage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PhantomKind {
    MovingEllipses,
    LowrankPlusSparse,
    Static,
}

impl PhantomKind {
    pub const NAMES: &'static [&'static str] = &["moving-ellipses", "lowrank-plus-sparse", "static"];

    pub fn name(self) -> &'static str {
        match self {
            PhantomKind::MovingEllipses => "moving-ellipses",
            PhantomKind::LowrankPlusSparse => "lowrank-plus-sparse",
            PhantomKind::Static => "static",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "moving-ellipses" => Some(PhantomKind::MovingEllipses),
            "lowrank-plus-sparse" => Some(PhantomKind::LowrankPlusSparse),
            "static" => Some(PhantomKind::Static),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    pub kind: PhantomKind,
    pub seed: u64,
    /// Peak displacement of the moving ellipses, in pixels.
    pub motion_amplitude: f64,
    pub n_ellipses: usize,
    /// Sparse blinking dots of the lowrank-plus-sparse kind.
    pub n_dots: usize,
}

impl PhantomSpec {
    /// The 128×128×16 lowrank-plus-sparse phantom used by the regression
    /// scenarios.
    pub fn standard() -> Self {
        Self {
            height: 128,
            width: 128,
            frames: 16,
            kind: PhantomKind::LowrankPlusSparse,
            seed: 0,
            motion_amplitude: 4.0,
            n_ellipses: 4,
            n_dots: 5,
        }
    }

    pub fn with_dims(mut self, height: usize, width: usize, frames: usize) -> Self {
        self.height = height;
        self.width = width;
        self.frames = frames;
        self
    }

    pub fn with_kind(mut self, kind: PhantomKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.frames == 0 {
            return Err(Error::dims(
                "positive phantom dimensions",
                format!("{}x{}x{}", self.height, self.width, self.frames),
            ));
        }
        if !(self.motion_amplitude >= 0.0) || !self.motion_amplitude.is_finite() {
            return Err(Error::param("motion_amplitude", format!("{} must be nonnegative", self.motion_amplitude)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Ellipse {
    cy: f64,
    cx: f64,
    ay: f64,
    ax: f64,
    angle: f64,
    intensity: f64,
}

impl Ellipse {
    /// Intensity at a pixel, with a logistic edge about one pixel wide.
    fn value(&self, y: f64, x: f64, dy: f64, dx: f64) -> f64 {
        let (s, c) = self.angle.sin_cos();
        let (py, px) = (y - self.cy - dy, x - self.cx - dx);
        let u = (c * px + s * py) / self.ax;
        let v = (-s * px + c * py) / self.ay;
        let r = (u * u + v * v).sqrt();
        let edge = (r - 1.0) * self.ax.min(self.ay);
        self.intensity / (1.0 + (edge / 0.6).exp())
    }

    fn random_inside(rng: &mut ChaCha8Rng, h: f64, w: f64, scale: f64) -> Self {
        Ellipse {
            cy: h / 2.0 + rng.random_range(-0.22..0.22) * h,
            cx: w / 2.0 + rng.random_range(-0.2..0.2) * w,
            ay: rng.random_range(0.05..0.12) * h * scale,
            ax: rng.random_range(0.05..0.12) * w * scale,
            angle: rng.random_range(0.0..PI),
            intensity: rng.random_range(0.25..0.6),
        }
    }
}

fn body(h: f64, w: f64) -> Ellipse {
    Ellipse {
        cy: h / 2.0,
        cx: w / 2.0,
        ay: 0.42 * h,
        ax: 0.38 * w,
        angle: 0.0,
        intensity: 0.35,
    }
}

pub fn make_phantom(spec: &PhantomSpec) -> Result<DynamicImage> {
    spec.validate()?;
    let data = match spec.kind {
        PhantomKind::MovingEllipses => moving_ellipses(spec, spec.motion_amplitude),
        PhantomKind::Static => moving_ellipses(spec, 0.0),
        PhantomKind::LowrankPlusSparse => lowrank_plus_sparse(spec),
    };
    let peak = data.iter().copied().fold(0.0, |m: f64, v| m.max(v.abs()));
    let scale = if peak > 0.0 { 1.0 / peak } else { 1.0 };
    DynamicImage::from_real(&data.mapv(|v| v * scale))
}

fn moving_ellipses(spec: &PhantomSpec, amplitude: f64) -> Array3<f64> {
    let (h, w, t) = (spec.height, spec.width, spec.frames);
    let (hf, wf) = (h as f64, w as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let background = body(hf, wf);
    let moving: Vec<(Ellipse, f64, f64)> = (0..spec.n_ellipses)
        .map(|_| {
            let e = Ellipse::random_inside(&mut rng, hf, wf, 1.0);
            let direction = rng.random_range(0.0..2.0 * PI);
            let phase = rng.random_range(0.0..2.0 * PI);
            (e, direction, phase)
        })
        .collect();
    Array3::from_shape_fn((h, w, t), |(y, x, f)| {
        let (yf, xf) = (y as f64, x as f64);
        let mut v = background.value(yf, xf, 0.0, 0.0);
        for (e, direction, phase) in &moving {
            let shift = amplitude * (2.0 * PI * f as f64 / t as f64 + phase).sin();
            v += e.value(yf, xf, shift * direction.sin(), shift * direction.cos());
        }
        v
    })
}

/// Temporal basis curves used by the low-rank component: orthonormal DCT
/// vectors scaled by `√T` so their entries are O(1).
fn temporal_curve(basis: &Array2<f64>, k: usize, frames: usize) -> Vec<f64> {
    (0..frames).map(|f| basis[[k, f]] * (frames as f64).sqrt()).collect()
}

/// Rank-≤3 Casorati background plus `n_dots` dots whose temporal signals
/// are orthogonal to the background's and whose pixels the background
/// leaves empty. The best rank-3 Casorati approximation of the result is
/// therefore exactly the background.
fn lowrank_plus_sparse(spec: &PhantomSpec) -> Array3<f64> {
    let (h, w, t) = (spec.height, spec.width, spec.frames);
    let (hf, wf) = (h as f64, w as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let outer = body(hf, wf);
    let organs: Vec<Ellipse> = (0..spec.n_ellipses)
        .map(|_| Ellipse::random_inside(&mut rng, hf, wf, 1.0))
        .collect();
    let heart = Ellipse {
        cy: hf / 2.0 + rng.random_range(-0.05..0.05) * hf,
        cx: wf / 2.0 + rng.random_range(-0.05..0.05) * wf,
        ay: 0.14 * hf,
        ax: 0.12 * wf,
        angle: rng.random_range(0.0..PI),
        intensity: 0.5,
    };
    let pulse = Ellipse { ay: heart.ay * 0.8, ax: heart.ax * 0.8, intensity: 0.22, ..heart };
    let wall = Ellipse { ay: heart.ay * 0.9, ax: heart.ax * 1.1, angle: heart.angle + 0.4, intensity: 0.12, ..heart };

    // Spatial maps m0 (static), m1, m2 (temporal modes 1 and 2).
    let mut maps = [Array2::zeros((h, w)), Array2::zeros((h, w)), Array2::zeros((h, w))];
    for y in 0..h {
        for x in 0..w {
            let (yf, xf) = (y as f64, x as f64);
            let mut m0 = 0.12 + outer.value(yf, xf, 0.0, 0.0) + heart.value(yf, xf, 0.0, 0.0);
            for e in &organs {
                m0 += e.value(yf, xf, 0.0, 0.0);
            }
            maps[0][[y, x]] = m0;
            maps[1][[y, x]] = pulse.value(yf, xf, 0.0, 0.0);
            maps[2][[y, x]] = wall.value(yf, xf, 0.0, 0.0);
        }
    }

    let rank = t.min(3);
    let dots_enabled = t > 3 && spec.n_dots > 0;
    let dots: Vec<(usize, usize)> = if dots_enabled {
        pick_dot_pixels(&mut rng, h, w, spec.n_dots)
    } else {
        Vec::new()
    };
    for &(y, x) in &dots {
        for m in maps.iter_mut() {
            m[[y, x]] = 0.0;
        }
    }

    let basis = dct_basis(t);
    let curves: Vec<Vec<f64>> = (0..rank).map(|k| temporal_curve(&basis, k, t)).collect();
    let mut data = Array3::from_shape_fn((h, w, t), |(y, x, f)| {
        (0..rank).map(|k| maps[k][[y, x]] * curves[k][f]).sum()
    });

    if dots_enabled {
        // Keep every dot's singular value well below the background's
        // smallest one.
        let sigma_min = smallest_map_singular_value(&maps[..rank]);
        let per_mode = dots.len().div_ceil(t - 3) as f64;
        for (i, &(y, x)) in dots.iter().enumerate() {
            let amp = rng.random_range(0.5..0.9f64).min(0.5 * sigma_min / per_mode.sqrt());
            let curve = temporal_curve(&basis, 3 + i % (t - 3), t);
            for f in 0..t {
                data[[y, x, f]] = amp * curve[f];
            }
        }
    }
    data
}

fn pick_dot_pixels(rng: &mut ChaCha8Rng, h: usize, w: usize, n: usize) -> Vec<(usize, usize)> {
    let total = h * w;
    let n = n.min(total);
    let mut chosen: Vec<(usize, usize)> = Vec::with_capacity(n);
    while chosen.len() < n {
        let y = rng.random_range(h / 4..(3 * h / 4).max(h / 4 + 1)).min(h - 1);
        let x = rng.random_range(w / 4..(3 * w / 4).max(w / 4 + 1)).min(w - 1);
        if !chosen.contains(&(y, x)) {
            chosen.push((y, x));
        } else if chosen.len() >= (h / 2).max(1) * (w / 2).max(1) {
            // Interior exhausted; fall back to a raster scan.
            for p in 0..total {
                let q = (p / w, p % w);
                if !chosen.contains(&q) {
                    chosen.push(q);
                    break;
                }
            }
        }
    }
    chosen
}

/// Smallest singular value of the pixel × mode matrix `[m0 m1 m2]`.
fn smallest_map_singular_value(maps: &[Array2<f64>]) -> f64 {
    let k = maps.len();
    let gram = DMatrix::from_fn(k, k, |i, j| (&maps[i] * &maps[j]).sum());
    let eig = SymmetricEigen::new(gram);
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min).max(0.0).sqrt()
}

/// Smooth complex coil maps: Gaussian magnitude profiles centred on points
/// around the field-of-view border, each with a linear phase ramp,
/// normalized so the squared magnitudes sum to one at every pixel.
pub fn make_synthetic_csm(height: usize, width: usize, coils: usize, seed: u64) -> Result<CoilSensitivities> {
    if coils == 0 {
        return Err(Error::param("coils", "must be at least 1"));
    }
    if height == 0 || width == 0 {
        return Err(Error::dims("positive coil map dimensions", format!("{height}x{width}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (hf, wf) = (height as f64, width as f64);
    let sigma = 0.45 * hf.max(wf);
    let params: Vec<(f64, f64, f64, f64)> = (0..coils)
        .map(|c| {
            let angle = 2.0 * PI * c as f64 / coils as f64 + rng.random_range(-0.2..0.2);
            let cy = hf / 2.0 + 0.55 * hf * angle.sin();
            let cx = wf / 2.0 + 0.55 * wf * angle.cos();
            let ramp = rng.random_range(-1.0..1.0) * PI / hf.max(wf);
            let phase0 = rng.random_range(0.0..2.0 * PI);
            (cy, cx, ramp, phase0)
        })
        .collect();
    let maps = Array3::from_shape_fn((coils, height, width), |(c, y, x)| {
        let (cy, cx, ramp, phase0) = params[c];
        let (dy, dx) = (y as f64 - cy, x as f64 - cx);
        let mag = (-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp();
        Complex64::from_polar(mag, phase0 + ramp * (dx + dy))
    });
    CoilSensitivities::normalized(maps)
}
