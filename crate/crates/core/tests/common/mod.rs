#![allow(dead_code)]

use dynrecon::acquisition::{make_vds_mask, AcquisitionOperator, KSpaceData};
use dynrecon::phantom::{make_phantom, PhantomSpec};
use dynrecon::DynamicImage;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize, t: usize) -> DynamicImage {
    DynamicImage::from_fn(h, w, t, |_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).unwrap()
}

/// `‖a − b‖ / max(‖b‖, 1)`.
pub fn gap(a: &DynamicImage, b: &DynamicImage) -> f64 {
    let d: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).norm_sqr()).sum();
    d.sqrt() / b.norm().max(1.0)
}

/// A noiseless single-coil vds-4 phantom problem.
pub fn phantom_problem(h: usize, w: usize, t: usize, seed: u64) -> (DynamicImage, AcquisitionOperator, KSpaceData) {
    let truth = make_phantom(&PhantomSpec::standard().with_dims(h, w, t).with_seed(seed)).unwrap();
    let op = AcquisitionOperator::new(make_vds_mask(h, w, t, 4.0, seed).unwrap(), None).unwrap();
    let b = op.forward(&truth).unwrap();
    (truth, op, b)
}
