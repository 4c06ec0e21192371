//! Flat dotted-key text configuration.
//!
//! One `key = value` pair per line; `#` starts a comment. Every key has a
//! default, unknown keys are rejected, and the resolved configuration can
//! be written back out and re-read unchanged. Solver schedules use the same
//! syntax under the `schedule.` prefix.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::acquisition::MaskPattern;
use crate::phantom::PhantomKind;
use crate::prox::{AttentionMode, AttentionParams, Channelization, SparseThreshold, ThresholdMode, ThresholdSpec};
use crate::solvers::{
    Acceleration, IterationParams, ScheduleParams, SlrAdmmParams, SolverConfig, SolverId, SolverSchedule,
};
use crate::tensor::{TransformKind, TransformSpec};
use crate::tuner::SpsaGains;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value {value:?} for `{key}`: {reason}")]
    Invalid { key: String, value: String, reason: String },
    #[error("`{0}` must be set for this command")]
    Missing(String),
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.into(),
    }
}

/// Known keys and their defaults.
pub const KEYS: &[(&str, &str)] = &[
    ("mask.pattern", "vds"),
    ("mask.accel", "4"),
    ("mask.lines", "16"),
    ("mask.acs", "24"),
    ("mask.seed", "0"),
    ("phantom.kind", "lowrank-plus-sparse"),
    ("phantom.dims", "128x128x16"),
    ("phantom.seed", "0"),
    ("csm.coils", "1"),
    ("csm.seed", "0"),
    ("noise.snr_db", ""),
    ("noise.seed", "0"),
    ("solver.id", "csa"),
    ("solver.iterations", "15"),
    ("solver.mu", "1"),
    ("solver.lr.threshold_mode", "absolute"),
    ("solver.lr.threshold", "0.1"),
    ("solver.sp.mode", "ast-energy"),
    ("solver.sp.threshold", "0.5"),
    ("solver.sp.channelization", "single"),
    ("solver.sp.hidden", "16"),
    ("solver.omega1", "0.5"),
    ("solver.t", "0"),
    ("solver.acceleration", "analytic-nesterov"),
    ("solver.transforms", "dft"),
    ("solver.admm.rho", "0.5"),
    ("solver.admm.eta", "1"),
    ("solver.admm.inner_steps", "1"),
    ("solver.admm.threshold_includes_mu", "false"),
    ("tuner.budget", "200"),
    ("tuner.seed", "0"),
    ("tuner.gains", "0.05,0.1"),
    ("tuner.train_count", "4"),
    ("compare.runs", "csa,lps,slr-admm"),
    ("io.input", ""),
    ("io.output", ""),
    ("io.report", ""),
    ("io.mask", ""),
    ("io.csm", ""),
    ("io.reference", ""),
    ("io.schedule", ""),
    ("io.train_dir", ""),
    ("io.pgm_dir", ""),
    ("io.effective_config", ""),
];

/// Keys overwritten by `--seed`.
pub const SEED_KEYS: &[&str] = &["mask.seed", "phantom.seed", "csm.seed", "noise.seed", "tuner.seed"];

fn default_of(key: &str) -> Option<&'static str> {
    KEYS.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
}

/// Parses `key = value` lines into an ordered map.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: raw.to_string(),
        })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            });
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// A validated run configuration with every default resolved.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

/// Sub-keys a `compare.<label>.` entry may override: solver keys without
/// their `solver.` prefix.
fn compare_subkey_ok(sub: &str) -> bool {
    default_of(&format!("solver.{sub}")).is_some()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (k, v) in parse_pairs(text)? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn is_known(key: &str) -> bool {
        if default_of(key).is_some() {
            return true;
        }
        match key.strip_prefix("compare.").and_then(|rest| rest.split_once('.')) {
            Some((label, sub)) => !label.is_empty() && compare_subkey_ok(sub),
            None => false,
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !Self::is_known(key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        let (k, v) = spec.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: spec.to_string(),
        })?;
        self.set(k.trim(), v)
    }

    pub fn set_all_seeds(&mut self, seed: u64) {
        for k in SEED_KEYS {
            self.values.insert(k.to_string(), seed.to_string());
        }
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .or_else(|| default_of(key))
            .unwrap_or("")
    }

    /// Non-empty value, or a `Missing` error naming the key.
    pub fn require(&self, key: &str) -> Result<&str, ConfigError> {
        let v = self.get(key);
        if v.is_empty() {
            Err(ConfigError::Missing(key.to_string()))
        } else {
            Ok(v)
        }
    }

    pub fn optional(&self, key: &str) -> Option<&str> {
        Some(self.get(key)).filter(|v| !v.is_empty())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn f64(&self, key: &str) -> Result<f64, ConfigError> {
        parse_f64(key, self.get(key))
    }

    pub fn usize(&self, key: &str) -> Result<usize, ConfigError> {
        let v = self.get(key);
        v.parse().map_err(|_| invalid(key, v, "expected a nonnegative integer"))
    }

    pub fn u64(&self, key: &str) -> Result<u64, ConfigError> {
        let v = self.get(key);
        v.parse().map_err(|_| invalid(key, v, "expected a nonnegative integer"))
    }

    pub fn bool(&self, key: &str) -> Result<bool, ConfigError> {
        let v = self.get(key);
        match v {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(invalid(key, v, "expected true or false")),
        }
    }

    pub fn optional_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.optional(key).map(|v| parse_f64(key, v)).transpose()
    }

    pub fn mask_pattern(&self) -> Result<MaskPattern, ConfigError> {
        let v = self.get("mask.pattern");
        MaskPattern::parse(v).ok_or_else(|| invalid("mask.pattern", v, allowed(MaskPattern::NAMES)))
    }

    pub fn phantom_kind(&self) -> Result<PhantomKind, ConfigError> {
        let v = self.get("phantom.kind");
        PhantomKind::parse(v).ok_or_else(|| invalid("phantom.kind", v, allowed(PhantomKind::NAMES)))
    }

    pub fn dims(&self, key: &str) -> Result<(usize, usize, usize), ConfigError> {
        let v = self.get(key);
        let parts: Vec<&str> = v.split('x').collect();
        let err = || invalid(key, v, "expected HxWxT with positive integers");
        if parts.len() != 3 {
            return Err(err());
        }
        let n: Vec<usize> = parts
            .iter()
            .map(|p| p.trim().parse::<usize>().ok().filter(|&d| d > 0))
            .collect::<Option<_>>()
            .ok_or_else(err)?;
        Ok((n[0], n[1], n[2]))
    }

    pub fn solver_id(&self) -> Result<SolverId, ConfigError> {
        let v = self.get("solver.id");
        SolverId::parse(v).ok_or_else(|| invalid("solver.id", v, allowed(SolverId::NAMES)))
    }

    /// SPSA gains from `tuner.gains` = `a,c` or `a,c,A`.
    pub fn spsa_gains(&self) -> Result<SpsaGains, ConfigError> {
        let key = "tuner.gains";
        let v = self.get(key);
        let nums = parse_list(key, v)?;
        let mut g = SpsaGains::default();
        match nums.as_slice() {
            [a, c] => {
                g.a = *a;
                g.c = *c;
            }
            [a, c, s] => {
                g.a = *a;
                g.c = *c;
                g.stability = Some(*s);
            }
            _ => return Err(invalid(key, v, "expected `a,c` or `a,c,A`")),
        }
        g.validate().map_err(|e| invalid(key, v, e.to_string()))?;
        Ok(g)
    }

    /// Solver settings under `prefix` (`solver.` or `compare.<label>.`
    /// falling back to `solver.`).
    pub fn solver_view<'a>(&'a self, label: Option<&'a str>) -> SolverView<'a> {
        SolverView { cfg: self, label }
    }

    pub fn compare_labels(&self) -> Result<Vec<String>, ConfigError> {
        let v = self.get("compare.runs");
        let labels: Vec<String> = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        if labels.len() < 2 {
            return Err(invalid("compare.runs", v, "needs at least two comma-separated labels"));
        }
        for k in self.values.keys() {
            if let Some((label, _)) = k.strip_prefix("compare.").and_then(|r| r.split_once('.')) {
                if !labels.iter().any(|l| l == label) {
                    return Err(invalid(k, self.get(k), format!("label `{label}` is not listed in compare.runs")));
                }
            }
        }
        Ok(labels)
    }
}

fn allowed(names: &[&str]) -> String {
    format!("allowed values: {}", names.join(", "))
}

fn parse_f64(key: &str, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = v.parse().map_err(|_| invalid(key, v, "expected a number"))?;
    if x.is_nan() {
        return Err(invalid(key, v, "NaN is not allowed"));
    }
    Ok(x)
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|p| parse_f64(key, p.trim())).collect()
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",")
}

/// Sparse threshold modes in configuration files.
pub const SP_MODES: &[&str] = &["st", "ast-fc", "ast-energy"];
pub const THRESHOLD_MODES: &[&str] = &["absolute", "relative"];
pub const CHANNELIZATIONS: &[&str] = &["single", "frames"];

fn threshold_mode_name(m: ThresholdMode) -> &'static str {
    match m {
        ThresholdMode::Absolute => "absolute",
        ThresholdMode::SigmaMaxRelative => "relative",
    }
}

fn parse_threshold_mode(key: &str, v: &str) -> Result<ThresholdMode, ConfigError> {
    match v {
        "absolute" => Ok(ThresholdMode::Absolute),
        "relative" => Ok(ThresholdMode::SigmaMaxRelative),
        _ => Err(invalid(key, v, allowed(THRESHOLD_MODES))),
    }
}

fn parse_transform(key: &str, v: &str) -> Result<TransformSpec, ConfigError> {
    let names: Vec<&str> = TransformKind::ALL.iter().map(|k| k.name()).collect();
    TransformKind::parse(v.trim())
        .map(TransformSpec::new)
        .ok_or_else(|| invalid(key, v, allowed(&names)))
}

fn parse_channelization(key: &str, v: &str) -> Result<Channelization, ConfigError> {
    Channelization::parse(v).ok_or_else(|| invalid(key, v, allowed(CHANNELIZATIONS)))
}

fn parse_acceleration(key: &str, v: &str) -> Result<Acceleration, ConfigError> {
    Acceleration::parse(v).ok_or_else(|| invalid(key, v, allowed(Acceleration::NAMES)))
}

/// Solver keys read through an optional `compare.<label>.` overlay.
pub struct SolverView<'a> {
    cfg: &'a RunConfig,
    label: Option<&'a str>,
}

impl SolverView<'_> {
    fn key(&self, sub: &str) -> String {
        if let Some(label) = self.label {
            let k = format!("compare.{label}.{sub}");
            if self.cfg.values.contains_key(&k) {
                return k;
            }
        }
        format!("solver.{sub}")
    }

    fn get(&self, sub: &str) -> (String, &str) {
        let k = self.key(sub);
        let v = self.cfg.get(&k);
        (k, v)
    }

    fn f64(&self, sub: &str) -> Result<f64, ConfigError> {
        let (k, v) = self.get(sub);
        parse_f64(&k, v)
    }

    fn usize(&self, sub: &str) -> Result<usize, ConfigError> {
        let (k, v) = self.get(sub);
        v.parse().map_err(|_| invalid(&k, v, "expected a nonnegative integer"))
    }

    pub fn id(&self) -> Result<SolverId, ConfigError> {
        let k = self.key("id");
        if let Some(label) = self.label {
            if !k.starts_with("compare.") {
                if let Some(id) = SolverId::parse(label) {
                    return Ok(id);
                }
            }
        }
        let v = self.cfg.get(&k);
        SolverId::parse(v).ok_or_else(|| invalid(&k, v, allowed(SolverId::NAMES)))
    }

    fn transforms(&self) -> Result<(TransformSpec, TransformSpec), ConfigError> {
        let (k, v) = self.get("transforms");
        let parts: Vec<&str> = v.split(',').collect();
        match parts.as_slice() {
            [one] => {
                let t = parse_transform(&k, one)?;
                Ok((t, t))
            }
            [lr, sp] => Ok((parse_transform(&k, lr)?, parse_transform(&k, sp)?)),
            _ => Err(invalid(&k, v, "expected one transform or `lr,sp`")),
        }
    }

    fn sparse_threshold(&self, frames: usize) -> Result<SparseThreshold, ConfigError> {
        let (mk, mode) = self.get("sp.mode");
        let value = self.f64("sp.threshold")?;
        let (ck, ch) = self.get("sp.channelization");
        let channelization = parse_channelization(&ck, ch)?;
        let channels = channelization.channel_count(frames);
        let sp = match mode {
            "st" => SparseThreshold::Absolute(value),
            "ast-energy" => SparseThreshold::Attention(AttentionParams::energy(channels, value, channelization)),
            "ast-fc" => {
                let hidden = self.usize("sp.hidden")?;
                if hidden == 0 {
                    let (k, v) = self.get("sp.hidden");
                    return Err(invalid(&k, v, "must be positive"));
                }
                SparseThreshold::Attention(AttentionParams::fc_zero(channels, hidden, channelization))
            }
            _ => return Err(invalid(&mk, mode, allowed(SP_MODES))),
        };
        sp.validate().map_err(|e| {
            let (k, v) = self.get("sp.threshold");
            invalid(&k, v, e.to_string())
        })?;
        Ok(sp)
    }

    /// Shared iteration parameters. `frames` sizes frame-channelized AST.
    pub fn iteration_params(&self, frames: usize) -> Result<IterationParams, ConfigError> {
        let (lr_transform, sp_transform) = self.transforms()?;
        let (mk, mode) = self.get("lr.threshold_mode");
        let p = IterationParams {
            mu: self.f64("mu")?,
            lr_threshold: ThresholdSpec {
                mode: parse_threshold_mode(&mk, mode)?,
                value: self.f64("lr.threshold")?,
            },
            sp_threshold: self.sparse_threshold(frames)?,
            omega1: self.f64("omega1")?,
            t: self.f64("t")?,
            lr_transform,
            sp_transform,
        };
        p.validate().map_err(|e| {
            let name = match &e {
                crate::Error::InvalidParameter { name, .. } => *name,
                _ => "params",
            };
            let sub = match name {
                "lr_threshold" => "lr.threshold",
                "sp_threshold" => "sp.threshold",
                other => other,
            };
            let (k, v) = self.get(sub);
            invalid(&k, v, e.to_string())
        })?;
        Ok(p)
    }

    pub fn schedule(&self, frames: usize) -> Result<SolverSchedule, ConfigError> {
        let iterations = self.usize("iterations")?;
        if iterations == 0 {
            let (k, v) = self.get("iterations");
            return Err(invalid(&k, v, "must be positive"));
        }
        let (ak, a) = self.get("acceleration");
        Ok(SolverSchedule::shared(
            iterations,
            self.iteration_params(frames)?,
            parse_acceleration(&ak, a)?,
        ))
    }

    pub fn admm(&self, frames: usize) -> Result<SlrAdmmParams, ConfigError> {
        let p = self.iteration_params(frames)?;
        let (bk, bv) = self.get("admm.threshold_includes_mu");
        let includes = match bv {
            "true" => true,
            "false" => false,
            _ => return Err(invalid(&bk, bv, "expected true or false")),
        };
        let params = SlrAdmmParams {
            rho: self.f64("admm.rho")?,
            eta: self.f64("admm.eta")?,
            mu: p.mu,
            lr_threshold: p.lr_threshold,
            sp_threshold: p.sp_threshold,
            lr_transform: p.lr_transform,
            sp_transform: p.sp_transform,
            iterations: self.usize("iterations")?,
            inner_ista_steps: self.usize("admm.inner_steps")?,
            threshold_includes_mu: includes,
        };
        params.validate().map_err(|e| {
            let (k, v) = self.get("admm.rho");
            invalid(&k, v, e.to_string())
        })?;
        Ok(params)
    }

    /// Solver and parameters; `schedule` overrides the configured schedule
    /// for schedule-driven solvers.
    pub fn solver_config(&self, frames: usize, schedule: Option<&SolverSchedule>) -> Result<SolverConfig, ConfigError> {
        let id = self.id()?;
        if id == SolverId::SlrAdmm {
            return Ok(SolverConfig::SlrAdmm(self.admm(frames)?));
        }
        let s = match schedule {
            Some(s) => s.clone(),
            None => self.schedule(frames)?,
        };
        Ok(match id {
            SolverId::IstaLr => SolverConfig::IstaLr(s),
            SolverId::IstaSp => SolverConfig::IstaSp(s),
            SolverId::Csa => SolverConfig::Csa(s),
            SolverId::UnrolledCsa => SolverConfig::UnrolledCsa(if s.is_per_iteration() { s } else { s.to_per_iteration() }),
            SolverId::Lps => SolverConfig::Lps(s),
            SolverId::SlrAdmm => unreachable!("handled above"),
        })
    }
}

fn write_block(out: &mut String, prefix: &str, p: &IterationParams) {
    let _ = writeln!(out, "{prefix}.mu = {}", p.mu);
    let _ = writeln!(out, "{prefix}.lr.threshold_mode = {}", threshold_mode_name(p.lr_threshold.mode));
    let _ = writeln!(out, "{prefix}.lr.threshold = {}", p.lr_threshold.value);
    let _ = writeln!(out, "{prefix}.lr.transform = {}", p.lr_transform.kind.name());
    let _ = writeln!(out, "{prefix}.sp.transform = {}", p.sp_transform.kind.name());
    match &p.sp_threshold {
        SparseThreshold::Absolute(tau) => {
            let _ = writeln!(out, "{prefix}.sp.mode = st");
            let _ = writeln!(out, "{prefix}.sp.threshold = {tau}");
        }
        SparseThreshold::Attention(a) => {
            let mode = match a.mode {
                AttentionMode::EnergyProportional => "ast-energy",
                AttentionMode::FcAttention => "ast-fc",
            };
            let _ = writeln!(out, "{prefix}.sp.mode = {mode}");
            let _ = writeln!(out, "{prefix}.sp.threshold = {}", a.alpha);
            let _ = writeln!(out, "{prefix}.sp.channelization = {}", a.channelization.name());
            let _ = writeln!(out, "{prefix}.sp.channels = {}", a.channels);
            let _ = writeln!(out, "{prefix}.sp.hidden = {}", a.hidden);
            if a.mode == AttentionMode::FcAttention {
                let _ = writeln!(out, "{prefix}.sp.fc1_weights = {}", join(a.fc1_weights.iter().copied()));
                let _ = writeln!(out, "{prefix}.sp.fc1_bias = {}", join(a.fc1_bias.iter().copied()));
                let _ = writeln!(out, "{prefix}.sp.fc2_weights = {}", join(a.fc2_weights.iter().copied()));
                let _ = writeln!(out, "{prefix}.sp.fc2_bias = {}", join(a.fc2_bias.iter().copied()));
            }
        }
    }
    let _ = writeln!(out, "{prefix}.omega1 = {}", p.omega1);
    let _ = writeln!(out, "{prefix}.t = {}", p.t);
}

/// Serializes a schedule; values are written in shortest round-trip form.
pub fn schedule_to_text(s: &SolverSchedule) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "schedule.iterations = {}", s.iterations);
    let _ = writeln!(out, "schedule.acceleration = {}", s.acceleration.name());
    match &s.params {
        ScheduleParams::Shared(p) => {
            let _ = writeln!(out, "schedule.form = shared");
            write_block(&mut out, "schedule.shared", p);
        }
        ScheduleParams::PerIteration(list) => {
            let _ = writeln!(out, "schedule.form = per-iteration");
            for (n, p) in list.iter().enumerate() {
                write_block(&mut out, &format!("schedule.{n}"), p);
            }
        }
    }
    out
}

const BLOCK_KEYS: &[&str] = &[
    "mu",
    "lr.threshold_mode",
    "lr.threshold",
    "lr.transform",
    "sp.transform",
    "sp.mode",
    "sp.threshold",
    "sp.channelization",
    "sp.channels",
    "sp.hidden",
    "sp.fc1_weights",
    "sp.fc1_bias",
    "sp.fc2_weights",
    "sp.fc2_bias",
    "omega1",
    "t",
];

struct Block<'a> {
    map: &'a BTreeMap<String, String>,
    prefix: String,
}

impl Block<'_> {
    fn key(&self, sub: &str) -> String {
        format!("{}.{sub}", self.prefix)
    }

    fn get(&self, sub: &str) -> Result<(String, &str), ConfigError> {
        let k = self.key(sub);
        match self.map.get(&k) {
            Some(v) => Ok((k, v.as_str())),
            None => Err(ConfigError::Missing(k)),
        }
    }

    fn f64(&self, sub: &str) -> Result<f64, ConfigError> {
        let (k, v) = self.get(sub)?;
        parse_f64(&k, v)
    }

    fn usize(&self, sub: &str) -> Result<usize, ConfigError> {
        let (k, v) = self.get(sub)?;
        v.parse().map_err(|_| invalid(&k, v, "expected a nonnegative integer"))
    }

    fn matrix(&self, sub: &str, rows: usize, cols: usize) -> Result<Array2<f64>, ConfigError> {
        let (k, v) = self.get(sub)?;
        let values = parse_list(&k, v)?;
        Array2::from_shape_vec((rows, cols), values).map_err(|_| invalid(&k, v, format!("expected {rows}x{cols} values")))
    }

    fn vector(&self, sub: &str, len: usize) -> Result<Array1<f64>, ConfigError> {
        let (k, v) = self.get(sub)?;
        let values = parse_list(&k, v)?;
        if values.len() != len {
            return Err(invalid(&k, v, format!("expected {len} values")));
        }
        Ok(Array1::from(values))
    }

    fn params(&self) -> Result<IterationParams, ConfigError> {
        let (mk, mode) = self.get("lr.threshold_mode")?;
        let lr_mode = parse_threshold_mode(&mk, mode)?;
        let (tk, tv) = self.get("lr.transform")?;
        let lr_transform = parse_transform(&tk, tv)?;
        let (tk, tv) = self.get("sp.transform")?;
        let sp_transform = parse_transform(&tk, tv)?;
        let (sk, smode) = self.get("sp.mode")?;
        let value = self.f64("sp.threshold")?;
        let sp_threshold = match smode {
            "st" => SparseThreshold::Absolute(value),
            "ast-energy" | "ast-fc" => {
                let (ck, cv) = self.get("sp.channelization")?;
                let channelization = parse_channelization(&ck, cv)?;
                let channels = self.usize("sp.channels")?;
                let hidden = self.usize("sp.hidden")?;
                let mut a = AttentionParams::fc_zero(channels, hidden, channelization);
                a.alpha = value;
                if smode == "ast-energy" {
                    a.mode = AttentionMode::EnergyProportional;
                } else {
                    a.fc1_weights = self.matrix("sp.fc1_weights", hidden, channels)?;
                    a.fc1_bias = self.vector("sp.fc1_bias", hidden)?;
                    a.fc2_weights = self.matrix("sp.fc2_weights", channels, hidden)?;
                    a.fc2_bias = self.vector("sp.fc2_bias", channels)?;
                }
                SparseThreshold::Attention(a)
            }
            _ => return Err(invalid(&sk, smode, allowed(SP_MODES))),
        };
        let p = IterationParams {
            mu: self.f64("mu")?,
            lr_threshold: ThresholdSpec {
                mode: lr_mode,
                value: self.f64("lr.threshold")?,
            },
            sp_threshold,
            omega1: self.f64("omega1")?,
            t: self.f64("t")?,
            lr_transform,
            sp_transform,
        };
        p.validate().map_err(|e| invalid(&self.prefix, "", e.to_string()))?;
        Ok(p)
    }
}

pub fn schedule_from_text(text: &str) -> Result<SolverSchedule, ConfigError> {
    let map = parse_pairs(text)?;
    let get = |k: &str| map.get(k).map(String::as_str).ok_or_else(|| ConfigError::Missing(k.to_string()));
    let it = get("schedule.iterations")?;
    let iterations: usize = it
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| invalid("schedule.iterations", it, "expected a positive integer"))?;
    let acceleration = parse_acceleration("schedule.acceleration", get("schedule.acceleration")?)?;
    let form = get("schedule.form")?;
    let blocks: Vec<String> = match form {
        "shared" => vec!["shared".into()],
        "per-iteration" => (0..iterations).map(|n| n.to_string()).collect(),
        _ => return Err(invalid("schedule.form", form, "allowed values: shared, per-iteration")),
    };
    for k in map.keys() {
        let known = matches!(k.as_str(), "schedule.iterations" | "schedule.acceleration" | "schedule.form")
            || k.strip_prefix("schedule.")
                .and_then(|r| r.split_once('.'))
                .is_some_and(|(b, sub)| blocks.iter().any(|x| x == b) && BLOCK_KEYS.contains(&sub));
        if !known {
            return Err(ConfigError::UnknownKey(k.clone()));
        }
    }
    let params = blocks
        .iter()
        .map(|b| {
            Block {
                map: &map,
                prefix: format!("schedule.{b}"),
            }
            .params()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(if form == "shared" {
        SolverSchedule::shared(iterations, params.into_iter().next().expect("one block"), acceleration)
    } else {
        SolverSchedule::per_iteration(params, acceleration)
    })
}
