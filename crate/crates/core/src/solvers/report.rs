use std::fmt::Write as _;

use crate::tensor::DynamicImage;

/// Values recorded after one iteration, evaluated at that iteration's
/// output.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `½‖A x − b‖²`.
    pub fidelity: f64,
    pub ttnn: f64,
    pub l1: f64,
    /// `fidelity + λ₁·ttnn + λ₂·l1` with the iteration's objective weights.
    pub objective: f64,
    pub psnr: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ReconReport {
    pub solver_id: String,
    pub trace: Vec<IterationRecord>,
    pub final_image: DynamicImage,
    pub wall_time: f64,
    /// Low-rank and sparse components, for solvers that keep them apart.
    pub components: Option<(DynamicImage, DynamicImage)>,
}

pub(crate) fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

impl ReconReport {
    pub const CSV_HEADER: &'static str = "iteration,fidelity,ttnn,l1,objective,psnr";

    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn final_objective(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.objective)
    }

    /// First iteration (1-based) whose objective is at most `target`.
    pub fn iterations_to(&self, target: f64) -> Option<usize> {
        self.trace.iter().find(|r| r.objective <= target).map(|r| r.iteration)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.trace {
            let psnr = r.psnr.map(fmt_f64).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.iteration,
                fmt_f64(r.fidelity),
                fmt_f64(r.ttnn),
                fmt_f64(r.l1),
                fmt_f64(r.objective),
                psnr
            );
        }
        out
    }
}
