//! Reference computations that do not share code paths with the library.

use dynrecon::DynamicImage;
use nalgebra::DMatrix;
use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn random_complex(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize, t: usize) -> DynamicImage {
    DynamicImage::from_fn(h, w, t, |_| random_complex(rng)).unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<Complex64> {
    Array2::from_shape_fn((rows, cols), |_| random_complex(rng))
}

pub fn frob(m: &Array2<Complex64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `‖a − b‖ / ‖b‖`.
pub fn relative_gap(a: &DynamicImage, b: &DynamicImage) -> f64 {
    let diff: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).norm_sqr()).sum();
    diff.sqrt() / b.norm().max(f64::MIN_POSITIVE)
}

/// Nuclear norm from the eigenvalues `±σᵢ` of the Hermitian dilation
/// `[[0, Y], [Yᴴ, 0]]`.
pub fn nuclear_norm_eig(y: &Array2<Complex64>) -> f64 {
    let (m, n) = y.dim();
    let mut d = DMatrix::<Complex64>::zeros(m + n, m + n);
    for ((i, j), z) in y.indexed_iter() {
        d[(i, m + j)] = *z;
        d[(m + j, i)] = z.conj();
    }
    0.5 * d.symmetric_eigenvalues().iter().map(|l| l.abs()).sum::<f64>()
}

/// `½‖Y − M‖² + τ‖Y‖_*`.
pub fn svt_objective(y: &Array2<Complex64>, m: &Array2<Complex64>, tau: f64) -> f64 {
    0.5 * frob(&(y - m)).powi(2) + tau * nuclear_norm_eig(y)
}

/// Minimizer of `½|y − z|² + τ|y|` over 2001 points on the line through `z`
/// spanning `[−2|z|, 2|z|]`, and the grid spacing.
pub fn st_grid_oracle(z: Complex64, tau: f64) -> (Complex64, f64) {
    let r = z.norm();
    if r == 0.0 {
        return (Complex64::new(0.0, 0.0), 0.0);
    }
    let unit = z / r;
    let step = 4.0 * r / 2000.0;
    let objective = |y: Complex64| 0.5 * (y - z).norm_sqr() + tau * y.norm();
    let best = (0..=2000)
        .map(|k| unit * (-2.0 * r + k as f64 * step))
        .min_by(|a, b| objective(*a).total_cmp(&objective(*b)))
        .unwrap();
    (best, step)
}
