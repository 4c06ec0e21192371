//! Reconstruction solvers: single-prior ISTA, the composite splitting
//! algorithm with shared or per-iteration parameters, serial L+S ISTA and
//! SLR-ADMM.
//!
//! Every solver starts from `x0 = Aᴴb` unless told otherwise, runs a fixed
//! number of iterations and records one [`IterationRecord`] per iteration.

mod compare;
mod report;
mod schedule;

use std::time::Instant;

pub use compare::{compare_structures, ComparisonReport, ComparisonRow, LabeledConfig, SolverConfig, SolverId};
pub use report::{IterationRecord, ReconReport};
pub(crate) use report::fmt_f64;
pub use schedule::{
    nesterov_coefficients, nesterov_t_next, Acceleration, IterationParams, ScheduleParams, SlrAdmmParams,
    SolverSchedule,
};

use crate::acquisition::{AcquisitionOperator, KSpaceData};
use crate::error::{Error, Result};
use crate::metrics::psnr_images;
use crate::prox::{sparse_prox, svt_tensor, transformed_l1, ttnn, SparseThreshold, ThresholdMode};
use crate::tensor::{dims_str, DynamicImage, TransformSpec};

/// Optional inputs shared by all solvers.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions<'a> {
    /// Starting image; defaults to `Aᴴb`.
    pub x0: Option<&'a DynamicImage>,
    /// Ground truth for the per-iteration PSNR column.
    pub reference: Option<&'a DynamicImage>,
}

impl<'a> RunOptions<'a> {
    pub fn with_reference(reference: &'a DynamicImage) -> Self {
        Self {
            x0: None,
            reference: Some(reference),
        }
    }
}

/// Prior used by [`ista_reconstruct`]. The sparse prior runs ST or AST
/// according to the schedule's sparse threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Prior {
    LowRank,
    Sparse,
}

fn initial_image(b: &KSpaceData, op: &AcquisitionOperator, x0: Option<&DynamicImage>) -> Result<DynamicImage> {
    match x0 {
        Some(x) => {
            if x.dims() != op.image_dims() {
                return Err(Error::dims(dims_str(op.image_dims()), dims_str(x.dims())));
            }
            Ok(x.clone())
        }
        None => op.adjoint(b),
    }
}

fn check_reference(op: &AcquisitionOperator, reference: Option<&DynamicImage>) -> Result<()> {
    match reference {
        Some(r) if r.dims() != op.image_dims() => Err(Error::dims(dims_str(op.image_dims()), dims_str(r.dims()))),
        _ => Ok(()),
    }
}

fn check_finite(x: &DynamicImage, solver: &str, iteration: usize) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged {
            solver: solver.to_string(),
            iteration,
        })
    }
}

struct TraceSpec<'a> {
    reference: Option<&'a DynamicImage>,
    lr_transform: TransformSpec,
    sp_transform: TransformSpec,
    weights: (f64, f64),
}

#[allow(clippy::too_many_arguments)]
fn record(
    iteration: usize,
    b: &KSpaceData,
    op: &AcquisitionOperator,
    image: &DynamicImage,
    lr_part: &DynamicImage,
    sp_part: &DynamicImage,
    spec: &TraceSpec,
) -> Result<IterationRecord> {
    let fidelity = op.fidelity(image, b)?;
    let ttnn = ttnn(lr_part, spec.lr_transform)?;
    let l1 = transformed_l1(sp_part, spec.sp_transform);
    let psnr = spec.reference.map(|r| psnr_images(image, r)).transpose()?;
    Ok(IterationRecord {
        iteration,
        fidelity,
        ttnn,
        l1,
        objective: fidelity + spec.weights.0 * ttnn + spec.weights.1 * l1,
        psnr,
    })
}

fn gradient_step(b: &KSpaceData, op: &AcquisitionOperator, x: &DynamicImage, mu: f64) -> Result<DynamicImage> {
    let (g, _) = op.gradient(x, b)?;
    x.lin_comb(1.0, &g, -mu)
}

/// One composite splitting step without acceleration:
/// `Z = ω₁·Tᴴ SVT T(x̄) + ω₂·Dᴴ ST D(x̄)` with `x̄ = x − μAᴴ(Ax − b)`.
/// A branch with zero weight is not evaluated.
pub fn composite_step(b: &KSpaceData, op: &AcquisitionOperator, x: &DynamicImage, p: &IterationParams) -> Result<DynamicImage> {
    let xbar = gradient_step(b, op, x, p.mu)?;
    let (w1, w2) = (p.omega1, p.omega2());
    if w2 == 0.0 {
        return svt_tensor(&xbar, p.lr_transform, &p.lr_threshold, w1);
    }
    if w1 == 0.0 {
        return sparse_prox(&xbar, p.sp_transform, &p.sp_threshold, w2);
    }
    let y1 = svt_tensor(&xbar, p.lr_transform, &p.lr_threshold, w1)?;
    let y2 = sparse_prox(&xbar, p.sp_transform, &p.sp_threshold, w2)?;
    y1.lin_comb(w1, &y2, w2)
}

fn ista_step(b: &KSpaceData, op: &AcquisitionOperator, x: &DynamicImage, p: &IterationParams, prior: Prior) -> Result<DynamicImage> {
    let xbar = gradient_step(b, op, x, p.mu)?;
    match prior {
        Prior::LowRank => svt_tensor(&xbar, p.lr_transform, &p.lr_threshold, 1.0),
        Prior::Sparse => sparse_prox(&xbar, p.sp_transform, &p.sp_threshold, 1.0),
    }
}

/// Fixed-count loop with the schedule's acceleration:
/// `X ← Z + c·(Z − Z_prev)` after each step, `Z⁰ = x0`.
#[allow(clippy::too_many_arguments)]
fn accelerated_loop<F, W>(
    solver: &str,
    b: &KSpaceData,
    op: &AcquisitionOperator,
    schedule: &SolverSchedule,
    opts: &RunOptions,
    trace: bool,
    mut step: F,
    weights: W,
) -> Result<(DynamicImage, Vec<IterationRecord>)>
where
    F: FnMut(&DynamicImage, &IterationParams) -> Result<DynamicImage>,
    W: Fn(&IterationParams) -> (f64, f64),
{
    schedule.validate()?;
    check_reference(op, opts.reference)?;
    let x0 = initial_image(b, op, opts.x0)?;
    let nesterov = nesterov_coefficients(schedule.iterations);
    let mut records = Vec::with_capacity(if trace { schedule.iterations } else { 0 });
    let mut x = x0.clone();
    let mut z_prev = x0;
    for n in 0..schedule.iterations {
        let p = schedule.params(n);
        let z = step(&x, p)?;
        check_finite(&z, solver, n + 1)?;
        if trace {
            let spec = TraceSpec {
                reference: opts.reference,
                lr_transform: p.lr_transform,
                sp_transform: p.sp_transform,
                weights: weights(p),
            };
            records.push(record(n + 1, b, op, &z, &z, &z, &spec)?);
        }
        x = match schedule.momentum(n, &nesterov) {
            Some(c) => z.lin_comb(1.0 + c, &z_prev, -c)?,
            None => z.clone(),
        };
        z_prev = z;
    }
    Ok((z_prev, records))
}

fn report(solver_id: &str, started: Instant, (final_image, trace): (DynamicImage, Vec<IterationRecord>)) -> ReconReport {
    ReconReport {
        solver_id: solver_id.to_string(),
        trace,
        final_image,
        wall_time: started.elapsed().as_secs_f64(),
        components: None,
    }
}

/// ISTA with a single prior: gradient step, then SVT (low-rank) or ST/AST
/// (sparse) at the schedule's threshold.
pub fn ista_reconstruct(
    b: &KSpaceData,
    op: &AcquisitionOperator,
    prior: Prior,
    schedule: &SolverSchedule,
    opts: &RunOptions,
) -> Result<ReconReport> {
    let started = Instant::now();
    let id = match prior {
        Prior::LowRank => "ista-lr",
        Prior::Sparse => "ista-sp",
    };
    let weights = |p: &IterationParams| {
        let (lr, sp) = raw_weights(p);
        match prior {
            Prior::LowRank => (lr, 0.0),
            Prior::Sparse => (0.0, sp),
        }
    };
    let out = accelerated_loop(id, b, op, schedule, opts, true, |x, p| ista_step(b, op, x, p, prior), weights)?;
    Ok(report(id, started, out))
}

/// `(τ₁/μ, τ₂/μ)` for absolute thresholds, zero for adaptive ones.
fn raw_weights(p: &IterationParams) -> (f64, f64) {
    let lr = match p.lr_threshold.mode {
        ThresholdMode::Absolute => p.lr_threshold.value / p.mu,
        ThresholdMode::SigmaMaxRelative => 0.0,
    };
    let sp = match p.sp_threshold {
        SparseThreshold::Absolute(tau) => tau / p.mu,
        SparseThreshold::Attention(_) => 0.0,
    };
    (lr, sp)
}

/// The composite splitting algorithm with the schedule's acceleration.
pub fn csa_reconstruct(b: &KSpaceData, op: &AcquisitionOperator, schedule: &SolverSchedule, opts: &RunOptions) -> Result<ReconReport> {
    let started = Instant::now();
    let out = accelerated_loop(
        "csa",
        b,
        op,
        schedule,
        opts,
        true,
        |x, p| composite_step(b, op, x, p),
        IterationParams::objective_weights,
    )?;
    Ok(report("csa", started, out))
}

/// Composite splitting with per-iteration parameters and learned momentum
/// `X ← Z + tⁿ(Z − Z_prev)`.
pub fn unrolled_csa(b: &KSpaceData, op: &AcquisitionOperator, schedule: &SolverSchedule, opts: &RunOptions) -> Result<ReconReport> {
    let started = Instant::now();
    if !schedule.is_per_iteration() {
        return Err(Error::param("schedule", "unrolled_csa needs a per-iteration parameter list"));
    }
    let mut learned = schedule.clone();
    learned.acceleration = Acceleration::LearnedT;
    let out = accelerated_loop(
        "unrolled-csa",
        b,
        op,
        &learned,
        opts,
        true,
        |x, p| composite_step(b, op, x, p),
        IterationParams::objective_weights,
    )?;
    Ok(report("unrolled-csa", started, out))
}

/// Final image of the composite splitting loop, without a trace.
pub(crate) fn csa_final_image(b: &KSpaceData, op: &AcquisitionOperator, schedule: &SolverSchedule) -> Result<DynamicImage> {
    let opts = RunOptions::default();
    let (image, _) = accelerated_loop(
        "csa",
        b,
        op,
        schedule,
        &opts,
        false,
        |x, p| composite_step(b, op, x, p),
        IterationParams::objective_weights,
    )?;
    Ok(image)
}

/// Serial L+S ISTA:
///
/// ```text
/// M̄ = L + S − μAᴴ(A(L + S) − b)
/// L ← prox_lr(M̄ − S)
/// S ← prox_sp(M̄ − L)
/// ```
///
/// starting from `L = x0`, `S = 0`. Thresholds are used as given
/// (`omega1` is ignored) and the schedule's acceleration is not applied.
/// The trace records TTNN of `L` and the l1 value of `S`.
pub fn lps_ista(b: &KSpaceData, op: &AcquisitionOperator, schedule: &SolverSchedule, opts: &RunOptions) -> Result<ReconReport> {
    let started = Instant::now();
    schedule.validate()?;
    check_reference(op, opts.reference)?;
    let mut l = initial_image(b, op, opts.x0)?;
    let (h, w, t) = l.dims();
    let mut s = DynamicImage::zeros(h, w, t);
    let mut m = l.clone();
    let mut trace = Vec::with_capacity(schedule.iterations);
    for n in 0..schedule.iterations {
        let p = schedule.params(n);
        let mbar = gradient_step(b, op, &m, p.mu)?;
        l = svt_tensor(&mbar.lin_comb(1.0, &s, -1.0)?, p.lr_transform, &p.lr_threshold, 1.0)?;
        s = sparse_prox(&mbar.lin_comb(1.0, &l, -1.0)?, p.sp_transform, &p.sp_threshold, 1.0)?;
        m = l.lin_comb(1.0, &s, 1.0)?;
        check_finite(&m, "lps", n + 1)?;
        let spec = TraceSpec {
            reference: opts.reference,
            lr_transform: p.lr_transform,
            sp_transform: p.sp_transform,
            weights: raw_weights(p),
        };
        trace.push(record(n + 1, b, op, &m, &l, &s, &spec)?);
    }
    let mut out = report("lps", started, (m, trace));
    out.components = Some((l, s));
    Ok(out)
}

/// SLR-ADMM: per outer iteration, `inner_ista_steps` proximal gradient
/// steps on the 𝒳-subproblem
///
/// ```text
/// 𝒳 ← prox_sp(𝒳 − μ[Aᴴ(A𝒳 − b) + ρ(𝒳 − 𝒯 + ℒ)])
/// ```
///
/// then `𝒯 ← SVT_{λ₁/ρ}(𝒳 + ℒ)` and `ℒ ← ℒ + η(𝒳 − 𝒯)`, starting from
/// `𝒳 = 𝒯 = x0`, `ℒ = 0`. The final image is 𝒳; the components are
/// `(𝒯, 𝒳)`.
pub fn slr_admm(b: &KSpaceData, op: &AcquisitionOperator, params: &SlrAdmmParams, opts: &RunOptions) -> Result<ReconReport> {
    let started = Instant::now();
    params.validate()?;
    check_reference(op, opts.reference)?;
    let mut x = initial_image(b, op, opts.x0)?;
    let mut t_lr = x.clone();
    let (h, w, frames) = x.dims();
    let mut mult = DynamicImage::zeros(h, w, frames);
    let (rho, mu) = (params.rho, params.mu);
    let lr_weight = match params.lr_threshold.mode {
        ThresholdMode::Absolute if params.threshold_includes_mu => params.lr_threshold.value * mu,
        ThresholdMode::Absolute => params.lr_threshold.value,
        ThresholdMode::SigmaMaxRelative => 0.0,
    };
    let sp_weight = match params.sp_threshold {
        SparseThreshold::Absolute(tau) => tau / mu,
        SparseThreshold::Attention(_) => 0.0,
    };
    let spec = TraceSpec {
        reference: opts.reference,
        lr_transform: params.lr_transform,
        sp_transform: params.sp_transform,
        weights: (lr_weight, sp_weight),
    };
    let mut trace = Vec::with_capacity(params.iterations);
    for n in 0..params.iterations {
        for _ in 0..params.inner_ista_steps {
            let (g, _) = op.gradient(&x, b)?;
            let mut z = x.data().clone();
            ndarray::Zip::from(&mut z)
                .and(g.data())
                .and(t_lr.data())
                .and(mult.data())
                .for_each(|z, &g, &t, &l| *z -= (g + (*z - t + l) * rho) * mu);
            x = sparse_prox(&DynamicImage::from_array_unchecked(z), params.sp_transform, &params.sp_threshold, 1.0)?;
        }
        t_lr = svt_tensor(
            &x.lin_comb(1.0, &mult, 1.0)?,
            params.lr_transform,
            &params.lr_threshold,
            params.t_update_divisor(),
        )?;
        let mut next = mult.data().clone();
        ndarray::Zip::from(&mut next)
            .and(x.data())
            .and(t_lr.data())
            .for_each(|l, &xv, &tv| *l += (xv - tv) * params.eta);
        mult = DynamicImage::from_array_unchecked(next);
        check_finite(&x, "slr-admm", n + 1)?;
        check_finite(&t_lr, "slr-admm", n + 1)?;
        trace.push(record(n + 1, b, op, &x, &x, &x, &spec)?);
    }
    let mut out = report("slr-admm", started, (x.clone(), trace));
    out.components = Some((t_lr, x));
    Ok(out)
}
