//! Image-quality metrics: PSNR and SSIM over magnitude tensors.
//!
//! Conventions:
//! - PSNR peak is the reference's maximum magnitude; MSE runs over every
//!   voxel of the H×W×T tensor. Identical inputs give `f64::INFINITY`.
//! - SSIM is the mean over frames of 2-D SSIM with a 7×7 uniform window
//!   (valid positions only, population statistics), `C₁ = (0.01·L)²`,
//!   `C₂ = (0.03·L)²`, `L` the reference's maximum magnitude. Absolute
//!   values depend on these choices.

use ndarray::{s, Array3, ArrayView2};

use crate::error::{Error, Result};
use crate::tensor::{dims_str, DynamicImage};

pub const SSIM_WINDOW: usize = 7;

fn check_dims(x: &Array3<f64>, reference: &Array3<f64>) -> Result<()> {
    if x.dim() != reference.dim() {
        return Err(Error::dims(dims_str(reference.dim()), dims_str(x.dim())));
    }
    Ok(())
}

fn peak(reference: &Array3<f64>) -> f64 {
    reference.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
}

pub fn mse(x: &Array3<f64>, reference: &Array3<f64>) -> Result<f64> {
    check_dims(x, reference)?;
    let sum: f64 = x.iter().zip(reference.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / x.len() as f64)
}

pub fn psnr(x: &Array3<f64>, reference: &Array3<f64>) -> Result<f64> {
    let err = mse(x, reference)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    let p = peak(reference);
    Ok(10.0 * (p * p / err).log10())
}

/// PSNR of magnitude images.
pub fn psnr_images(x: &DynamicImage, reference: &DynamicImage) -> Result<f64> {
    psnr(&x.magnitude(), &reference.magnitude())
}

pub fn ssim(x: &Array3<f64>, reference: &Array3<f64>) -> Result<f64> {
    check_dims(x, reference)?;
    let l = peak(reference);
    let c1 = (0.01 * l).powi(2);
    let c2 = (0.03 * l).powi(2);
    let frames = x.dim().2;
    let total: f64 = (0..frames)
        .map(|t| ssim_frame(x.slice(s![.., .., t]), reference.slice(s![.., .., t]), c1, c2))
        .sum();
    Ok(total / frames as f64)
}

pub fn ssim_images(x: &DynamicImage, reference: &DynamicImage) -> Result<f64> {
    ssim(&x.magnitude(), &reference.magnitude())
}

fn ssim_frame(x: ArrayView2<f64>, y: ArrayView2<f64>, c1: f64, c2: f64) -> f64 {
    let (h, w) = x.dim();
    let win_h = SSIM_WINDOW.min(h);
    let win_w = SSIM_WINDOW.min(w);
    let n = (win_h * win_w) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for r in 0..=(h - win_h) {
        for c in 0..=(w - win_w) {
            let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in r..r + win_h {
                for j in c..c + win_w {
                    let (a, b) = (x[[i, j]], y[[i, j]]);
                    sx += a;
                    sy += b;
                    sxx += a * a;
                    syy += b * b;
                    sxy += a * b;
                }
            }
            let (mx, my) = (sx / n, sy / n);
            let vx = sxx / n - mx * mx;
            let vy = syy / n - my * my;
            let cov = sxy / n - mx * my;
            let num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
            let den = (mx * mx + my * my + c1) * (vx + vy + c2);
            total += if den == 0.0 { 1.0 } else { num / den };
            count += 1;
        }
    }
    total / count as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_identical_is_infinite() {
        let a = Array3::from_shape_fn((4, 4, 2), |(i, j, k)| (i + j + k) as f64);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_uniform_error() {
        let mut r = Array3::zeros((3, 3, 2));
        r[[1, 1, 1]] = 1.0;
        let x = r.mapv(|v| v + 0.1);
        assert!((psnr(&x, &r).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch() {
        let a = Array3::zeros((2, 2, 2));
        let b = Array3::zeros((2, 2, 3));
        assert!(psnr(&a, &b).is_err());
        assert!(ssim(&a, &b).is_err());
    }

    #[test]
    fn ssim_identity_is_exactly_one() {
        let a = Array3::from_shape_fn((9, 11, 2), |(i, j, k)| ((i * 3 + j * 7 + k) % 5) as f64);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn ssim_small_frames_use_reduced_window() {
        let a = Array3::from_shape_fn((3, 4, 1), |(i, j, _)| (i * j) as f64);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let b = a.mapv(|v| v + 1.0);
        let v = ssim(&b, &a).unwrap();
        assert!(v < 1.0 && v > -1.0);
    }
}
