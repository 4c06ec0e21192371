use std::fmt::Write as _;
use std::time::Instant;

use super::report::fmt_f64;
use super::{csa_reconstruct, ista_reconstruct, lps_ista, slr_admm, unrolled_csa, Prior, ReconReport, RunOptions};
use super::{SlrAdmmParams, SolverSchedule};
use crate::acquisition::{AcquisitionOperator, KSpaceData};
use crate::error::{Error, Result};
use crate::metrics::{psnr_images, ssim_images};
use crate::tensor::{dims_str, DynamicImage};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverId {
    IstaLr,
    IstaSp,
    Csa,
    UnrolledCsa,
    Lps,
    SlrAdmm,
}

impl SolverId {
    pub const NAMES: &'static [&'static str] = &["ista-lr", "ista-sp", "csa", "unrolled-csa", "lps", "slr-admm"];

    pub fn name(self) -> &'static str {
        match self {
            SolverId::IstaLr => "ista-lr",
            SolverId::IstaSp => "ista-sp",
            SolverId::Csa => "csa",
            SolverId::UnrolledCsa => "unrolled-csa",
            SolverId::Lps => "lps",
            SolverId::SlrAdmm => "slr-admm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ista-lr" => Some(SolverId::IstaLr),
            "ista-sp" => Some(SolverId::IstaSp),
            "csa" => Some(SolverId::Csa),
            "unrolled-csa" => Some(SolverId::UnrolledCsa),
            "lps" => Some(SolverId::Lps),
            "slr-admm" => Some(SolverId::SlrAdmm),
            _ => None,
        }
    }
}

/// A solver together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum SolverConfig {
    IstaLr(SolverSchedule),
    IstaSp(SolverSchedule),
    Csa(SolverSchedule),
    UnrolledCsa(SolverSchedule),
    Lps(SolverSchedule),
    SlrAdmm(SlrAdmmParams),
}

impl SolverConfig {
    pub fn id(&self) -> SolverId {
        match self {
            SolverConfig::IstaLr(_) => SolverId::IstaLr,
            SolverConfig::IstaSp(_) => SolverId::IstaSp,
            SolverConfig::Csa(_) => SolverId::Csa,
            SolverConfig::UnrolledCsa(_) => SolverId::UnrolledCsa,
            SolverConfig::Lps(_) => SolverId::Lps,
            SolverConfig::SlrAdmm(_) => SolverId::SlrAdmm,
        }
    }

    pub fn run(&self, b: &KSpaceData, op: &AcquisitionOperator, opts: &RunOptions) -> Result<ReconReport> {
        match self {
            SolverConfig::IstaLr(s) => ista_reconstruct(b, op, Prior::LowRank, s, opts),
            SolverConfig::IstaSp(s) => ista_reconstruct(b, op, Prior::Sparse, s, opts),
            SolverConfig::Csa(s) => csa_reconstruct(b, op, s, opts),
            SolverConfig::UnrolledCsa(s) => unrolled_csa(b, op, s, opts),
            SolverConfig::Lps(s) => lps_ista(b, op, s, opts),
            SolverConfig::SlrAdmm(p) => slr_admm(b, op, p, opts),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledConfig {
    pub label: String,
    pub config: SolverConfig,
}

impl LabeledConfig {
    pub fn new(label: impl Into<String>, config: SolverConfig) -> Self {
        Self {
            label: label.into(),
            config,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    pub solver_id: String,
    pub psnr: f64,
    pub ssim: f64,
    pub objective: f64,
    pub wall_time: f64,
    pub iterations: usize,
    /// First iteration reaching the table's target objective.
    pub iters_to_target: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct ComparisonReport {
    pub zero_filled: ComparisonRow,
    pub rows: Vec<ComparisonRow>,
    pub reports: Vec<ReconReport>,
    /// The largest final objective among the solver rows.
    pub target_objective: f64,
}

impl ComparisonReport {
    pub const CSV_HEADER: &'static str = "label,solver,psnr_db,ssim,objective,wall_time_s,iterations,iters_to_target";

    pub fn row(&self, label: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in std::iter::once(&self.zero_filled).chain(&self.rows) {
            let iters = if r.iterations == 0 { String::new() } else { r.iterations.to_string() };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.6},{},{}",
                r.label,
                r.solver_id,
                fmt_f64(r.psnr),
                fmt_f64(r.ssim),
                fmt_f64(r.objective),
                r.wall_time,
                iters,
                r.iters_to_target.map(|n| n.to_string()).unwrap_or_default()
            );
        }
        out
    }
}

/// Runs every config on the same data and tabulates PSNR, SSIM, final
/// objective, wall time and iterations needed to reach the largest final
/// objective in the table. A zero-filled row comes first.
pub fn compare_structures(
    b: &KSpaceData,
    op: &AcquisitionOperator,
    configs: &[LabeledConfig],
    reference: &DynamicImage,
) -> Result<ComparisonReport> {
    if configs.len() < 2 {
        return Err(Error::param("configs", format!("need at least 2 solver configs, got {}", configs.len())));
    }
    if reference.dims() != op.image_dims() {
        return Err(Error::dims(dims_str(op.image_dims()), dims_str(reference.dims())));
    }
    let started = Instant::now();
    let zf = op.adjoint(b)?;
    let zero_filled = ComparisonRow {
        label: "zero-filled".into(),
        solver_id: "adjoint".into(),
        psnr: psnr_images(&zf, reference)?,
        ssim: ssim_images(&zf, reference)?,
        objective: op.fidelity(&zf, b)?,
        wall_time: started.elapsed().as_secs_f64(),
        iterations: 0,
        iters_to_target: None,
    };
    let opts = RunOptions::with_reference(reference);
    let reports = configs
        .iter()
        .map(|c| c.config.run(b, op, &opts))
        .collect::<Result<Vec<_>>>()?;
    let target = reports
        .iter()
        .map(ReconReport::final_objective)
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let rows = configs
        .iter()
        .zip(&reports)
        .map(|(c, r)| {
            Ok(ComparisonRow {
                label: c.label.clone(),
                solver_id: r.solver_id.clone(),
                psnr: psnr_images(&r.final_image, reference)?,
                ssim: ssim_images(&r.final_image, reference)?,
                objective: r.final_objective(),
                wall_time: r.wall_time,
                iterations: r.iterations(),
                iters_to_target: r.iterations_to(target),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonReport {
        zero_filled,
        rows,
        reports,
        target_objective: target,
    })
}
