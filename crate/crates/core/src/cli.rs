//! The `dynrecon` command-line front end.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::acquisition::{
    add_noise, make_equispaced_mask, make_radial_mask, make_vds_mask, make_vista_like_mask, AcquisitionOperator,
    CoilSensitivities, KSpaceData, MaskPattern, SamplingMask,
};
use crate::config::{schedule_from_text, schedule_to_text, ConfigError, RunConfig};
use crate::io::{export_frame_pgm, load_jotl, JotlError, JotlTensor, PgmError};
use crate::metrics::{psnr_images, ssim_images};
use crate::phantom::{make_phantom, make_synthetic_csm, PhantomSpec};
use crate::solvers::{compare_structures, fmt_f64, LabeledConfig, RunOptions, SolverSchedule};
use crate::tensor::DynamicImage;
use crate::tuner::{spsa_tune, TrainingPair, TrainingSet};

#[derive(Debug, Parser)]
#[command(name = "dynrecon", version, about = "Dynamic MRI reconstruction with joint low-rank and sparse priors")]
pub struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one key, `key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Seed for every randomized stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Suppress the summary output.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate a sampling mask.
    Mask,
    /// Generate a phantom image.
    Phantom,
    /// Simulate k-space from an image.
    Simulate,
    /// Reconstruct an image from k-space.
    Recon,
    /// Tune a per-iteration schedule with SPSA.
    Tune,
    /// Score reconstructions against a reference.
    Eval,
    /// Run several solvers on the same data.
    Compare,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: FileError,
    },
    #[error(transparent)]
    Numerical(#[from] crate::Error),
}

#[derive(Debug, Error)]
pub enum FileError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Jotl(#[from] JotlError),
    #[error(transparent)]
    Pgm(#[from] PgmError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(crate::Error::InvalidParameter { .. }) => 2,
            CliError::File {
                source: FileError::Jotl(JotlError::Invalid(_)),
                ..
            } => 4,
            CliError::File { .. } => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

fn file_err(path: &Path, e: impl Into<FileError>) -> CliError {
    CliError::File {
        path: path.display().to_string(),
        source: e.into(),
    }
}

type CliResult<T> = Result<T, CliError>;

/// Resolves the configuration from `--config`, `--set` and `--seed`.
pub fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for s in &cli.set {
        cfg.apply_override(s)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set_all_seeds(seed);
    }
    Ok(cfg)
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| file_err(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| file_err(path, e))
}

fn save(path: &Path, t: &JotlTensor) -> CliResult<()> {
    write_file(path, t.encode())
}

fn load(path: &Path) -> CliResult<JotlTensor> {
    load_jotl(path).map_err(|e| file_err(path, e))
}

fn load_image(path: &Path) -> CliResult<DynamicImage> {
    load(path)?.to_image().map_err(|e| file_err(path, e))
}

fn required_path(cfg: &RunConfig, key: &str) -> CliResult<PathBuf> {
    Ok(PathBuf::from(cfg.require(key)?))
}

fn mask_from_config(cfg: &RunConfig, (h, w, t): (usize, usize, usize)) -> CliResult<SamplingMask> {
    let seed = cfg.u64("mask.seed")?;
    let accel = cfg.f64("mask.accel")?;
    let mask = match cfg.mask_pattern()? {
        MaskPattern::Radial => make_radial_mask(h, w, t, cfg.usize("mask.lines")?, seed),
        MaskPattern::Vds => make_vds_mask(h, w, t, accel, seed),
        MaskPattern::Equispaced => {
            if accel.fract() != 0.0 || accel < 1.0 {
                return Err(ConfigError::Invalid {
                    key: "mask.accel".into(),
                    value: cfg.get("mask.accel").into(),
                    reason: "equispaced masks need a positive integer acceleration".into(),
                }
                .into());
            }
            make_equispaced_mask(h, w, t, accel as usize, cfg.usize("mask.acs")?)
        }
        MaskPattern::VistaLike => make_vista_like_mask(h, w, t, accel, seed),
        MaskPattern::Full => Ok(SamplingMask::full(h, w, t)),
    };
    Ok(mask?)
}

fn phantom_from_config(cfg: &RunConfig) -> CliResult<DynamicImage> {
    let (h, w, t) = cfg.dims("phantom.dims")?;
    let spec = PhantomSpec::standard()
        .with_dims(h, w, t)
        .with_kind(cfg.phantom_kind()?)
        .with_seed(cfg.u64("phantom.seed")?);
    Ok(make_phantom(&spec)?)
}

fn mask_for(cfg: &RunConfig, dims: (usize, usize, usize)) -> CliResult<SamplingMask> {
    match cfg.optional("io.mask") {
        Some(p) => {
            let path = Path::new(p);
            let pattern = cfg.mask_pattern()?;
            let mask = load(path)?.to_mask(pattern).map_err(|e| file_err(path, e))?;
            if mask.dims() != dims {
                return Err(crate::Error::dims(format!("{dims:?}"), format!("{:?}", mask.dims())).into());
            }
            Ok(mask)
        }
        None => mask_from_config(cfg, dims),
    }
}

fn csm_for(cfg: &RunConfig, (h, w): (usize, usize)) -> CliResult<Option<CoilSensitivities>> {
    if let Some(p) = cfg.optional("io.csm") {
        let path = Path::new(p);
        return Ok(Some(load(path)?.to_csm().map_err(|e| file_err(path, e))?));
    }
    let coils = cfg.usize("csm.coils")?;
    if coils == 0 {
        return Err(ConfigError::Invalid {
            key: "csm.coils".into(),
            value: "0".into(),
            reason: "must be positive".into(),
        }
        .into());
    }
    if coils == 1 {
        return Ok(None);
    }
    Ok(Some(make_synthetic_csm(h, w, coils, cfg.u64("csm.seed")?)?))
}

/// Image, operator and k-space of the configured simulation.
struct Scenario {
    truth: Option<DynamicImage>,
    op: AcquisitionOperator,
    kspace: KSpaceData,
}

fn simulate(cfg: &RunConfig, image: DynamicImage) -> CliResult<Scenario> {
    let (h, w, t) = image.dims();
    let mask = mask_for(cfg, (h, w, t))?;
    let csm = csm_for(cfg, (h, w))?;
    let op = AcquisitionOperator::new(mask, csm)?;
    let mut kspace = op.forward(&image)?;
    if let Some(snr) = cfg.optional_f64("noise.snr_db")? {
        kspace = add_noise(&kspace, op.mask(), snr, cfg.u64("noise.seed")?)?;
    }
    Ok(Scenario {
        truth: Some(image),
        op,
        kspace,
    })
}

/// Loads `io.input` k-space with the configured mask and coils, or
/// simulates the configured phantom scenario when no input is given.
fn scenario(cfg: &RunConfig) -> CliResult<Scenario> {
    let Some(input) = cfg.optional("io.input") else {
        return simulate(cfg, phantom_from_config(cfg)?);
    };
    let path = Path::new(input);
    let tensor = load(path)?;
    if tensor.dims.len() != 4 {
        return Err(file_err(path, JotlError::Shape(format!("k-space needs 4 dimensions, file has {:?}", tensor.dims))));
    }
    let (h, w, t) = (tensor.dims[1], tensor.dims[2], tensor.dims[3]);
    let mask = mask_for(cfg, (h, w, t))?;
    let kspace = tensor.to_kspace(&mask).map_err(|e| file_err(path, e))?;
    let csm = csm_for(cfg, (h, w))?;
    let op = AcquisitionOperator::new(mask, csm)?;
    let truth = match cfg.optional("io.reference") {
        Some(r) => Some(load_image(Path::new(r))?),
        None => None,
    };
    Ok(Scenario { truth, op, kspace })
}

fn loaded_schedule(cfg: &RunConfig) -> CliResult<Option<SolverSchedule>> {
    match cfg.optional("io.schedule") {
        Some(p) => {
            let path = Path::new(p);
            let text = fs::read_to_string(path).map_err(|e| file_err(path, e))?;
            Ok(Some(schedule_from_text(&text)?))
        }
        None => Ok(None),
    }
}

fn export_pgm(cfg: &RunConfig, image: &DynamicImage) -> CliResult<()> {
    if let Some(dir) = cfg.optional("io.pgm_dir") {
        let dir = Path::new(dir);
        fs::create_dir_all(dir).map_err(|e| file_err(dir, e))?;
        for t in 0..image.frames() {
            let path = dir.join(format!("frame_{t:03}.pgm"));
            export_frame_pgm(image, t, &path).map_err(|e| file_err(&path, e))?;
        }
    }
    Ok(())
}

fn dims_text((h, w, t): (usize, usize, usize)) -> String {
    format!("{h}x{w}x{t}")
}

fn cmd_mask(cfg: &RunConfig) -> CliResult<String> {
    let out = required_path(cfg, "io.output")?;
    let mask = mask_from_config(cfg, cfg.dims("phantom.dims")?)?;
    save(&out, &JotlTensor::from_mask(&mask))?;
    Ok(format!(
        "mask pattern={} dims={} nominal_accel={:.3} measured_accel={:.3}",
        mask.pattern,
        dims_text(mask.dims()),
        mask.nominal_accel,
        mask.measured_accel()
    ))
}

fn cmd_phantom(cfg: &RunConfig) -> CliResult<String> {
    let out = required_path(cfg, "io.output")?;
    let x = phantom_from_config(cfg)?;
    save(&out, &JotlTensor::from_image(&x))?;
    export_pgm(cfg, &x)?;
    Ok(format!("phantom kind={} dims={}", cfg.get("phantom.kind"), dims_text(x.dims())))
}

fn cmd_simulate(cfg: &RunConfig) -> CliResult<String> {
    let out = required_path(cfg, "io.output")?;
    let image = match cfg.optional("io.input") {
        Some(p) => load_image(Path::new(p))?,
        None => phantom_from_config(cfg)?,
    };
    let s = simulate(cfg, image)?;
    save(&out, &JotlTensor::from_kspace(&s.kspace))?;
    let mut line = format!(
        "simulate coils={} dims={} measured_accel={:.3}",
        s.op.coils(),
        dims_text(s.op.image_dims()),
        s.op.mask().measured_accel()
    );
    if cfg.optional("noise.snr_db").is_some() {
        let clean = s.op.forward(s.truth.as_ref().expect("simulated"))?;
        let noise = clean.samples() - s.kspace.samples();
        let noise_energy: f64 = noise.iter().map(|z| z.norm_sqr()).sum();
        let snr = 10.0 * (clean.norm_sqr() / noise_energy).log10();
        line.push_str(&format!(" snr_db={snr:.3}"));
    }
    Ok(line)
}

fn cmd_recon(cfg: &RunConfig) -> CliResult<String> {
    let s = scenario(cfg)?;
    let frames = s.op.image_dims().2;
    let schedule = loaded_schedule(cfg)?;
    let solver = cfg.solver_view(None).solver_config(frames, schedule.as_ref())?;
    let opts = RunOptions {
        x0: None,
        reference: s.truth.as_ref(),
    };
    let report = solver.run(&s.kspace, &s.op, &opts)?;
    if let Some(out) = cfg.optional("io.output") {
        save(Path::new(out), &JotlTensor::from_image(&report.final_image))?;
    }
    if let Some(path) = cfg.optional("io.report") {
        write_file(Path::new(path), report.to_csv())?;
    }
    export_pgm(cfg, &report.final_image)?;
    let mut line = format!("recon solver={} iterations={}", report.solver_id, report.iterations());
    if let Some(truth) = &s.truth {
        let zf = s.op.adjoint(&s.kspace)?;
        line.push_str(&format!(
            " psnr_db={} zero_filled_psnr_db={}",
            fmt_f64(psnr_images(&report.final_image, truth)?),
            fmt_f64(psnr_images(&zf, truth)?)
        ));
    }
    Ok(line)
}

fn training_set(cfg: &RunConfig) -> CliResult<TrainingSet> {
    let Some(dir) = cfg.optional("io.train_dir") else {
        let count = cfg.usize("tuner.train_count")?;
        let base_seed = cfg.u64("phantom.seed")?;
        let mask_seed = cfg.u64("mask.seed")?;
        let mut pairs = Vec::with_capacity(count);
        for i in 0..count as u64 {
            let mut c = cfg.clone();
            c.set("phantom.seed", &(base_seed + i).to_string())?;
            c.set("mask.seed", &(mask_seed + i).to_string())?;
            let s = simulate(&c, phantom_from_config(&c)?)?;
            pairs.push(TrainingPair {
                truth: s.truth.expect("simulated"),
                kspace: s.kspace,
                op: s.op,
            });
        }
        return Ok(TrainingSet::new(pairs)?);
    };
    let dir = Path::new(dir);
    let mut cases: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| file_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    cases.sort();
    let mut pairs = Vec::with_capacity(cases.len());
    for case in cases {
        let truth = load_image(&case.join("truth.jotl"))?;
        let mask_path = case.join("mask.jotl");
        let mask = load(&mask_path)?
            .to_mask(cfg.mask_pattern()?)
            .map_err(|e| file_err(&mask_path, e))?;
        let csm_path = case.join("csm.jotl");
        let csm = if csm_path.exists() {
            Some(load(&csm_path)?.to_csm().map_err(|e| file_err(&csm_path, e))?)
        } else {
            None
        };
        let k_path = case.join("kspace.jotl");
        let kspace = load(&k_path)?.to_kspace(&mask).map_err(|e| file_err(&k_path, e))?;
        let op = AcquisitionOperator::new(mask, csm)?;
        pairs.push(TrainingPair { truth, kspace, op });
    }
    Ok(TrainingSet::new(pairs)?)
}

fn cmd_tune(cfg: &RunConfig) -> CliResult<String> {
    let out = required_path(cfg, "io.output")?;
    let train = training_set(cfg)?;
    let frames = train.pairs()[0].op.image_dims().2;
    let init = match loaded_schedule(cfg)? {
        Some(s) => s,
        None => cfg.solver_view(None).schedule(frames)?,
    };
    let init = if init.is_per_iteration() { init } else { init.to_per_iteration() };
    let gains = cfg.spsa_gains()?;
    let budget = cfg.usize("tuner.budget")?;
    if budget == 0 {
        return Err(ConfigError::Invalid {
            key: "tuner.budget".into(),
            value: "0".into(),
            reason: "must be at least 1".into(),
        }
        .into());
    }
    let result = spsa_tune(&init, &train, budget, cfg.u64("tuner.seed")?, &gains)?;
    write_file(&out, schedule_to_text(&result.schedule))?;
    if let Some(path) = cfg.optional("io.report") {
        write_file(Path::new(path), result.to_csv())?;
    }
    Ok(format!(
        "tune pairs={} budget={} init_loss={} best_loss={}",
        train.len(),
        budget,
        fmt_f64(result.init_loss),
        fmt_f64(result.best_loss)
    ))
}

fn cmd_eval(cfg: &RunConfig) -> CliResult<String> {
    let reference = load_image(&required_path(cfg, "io.reference")?)?;
    let inputs: Vec<&str> = cfg
        .require("io.input")?
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    let mut csv = String::from("case,psnr_db,ssim\n");
    let (mut psnr_sum, mut ssim_sum) = (0.0, 0.0);
    for input in &inputs {
        let path = Path::new(input);
        let x = load_image(path)?;
        let p = psnr_images(&x, &reference)?;
        let s = ssim_images(&x, &reference)?;
        psnr_sum += p;
        ssim_sum += s;
        let case = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        csv.push_str(&format!("{case},{},{}\n", fmt_f64(p), fmt_f64(s)));
    }
    let n = inputs.len() as f64;
    csv.push_str(&format!("mean,{},{}\n", fmt_f64(psnr_sum / n), fmt_f64(ssim_sum / n)));
    if let Some(path) = cfg.optional("io.report") {
        write_file(Path::new(path), &csv)?;
    }
    Ok(csv.trim_end().to_string())
}

fn cmd_compare(cfg: &RunConfig) -> CliResult<String> {
    let s = scenario(cfg)?;
    let truth = s.truth.as_ref().ok_or_else(|| ConfigError::Missing("io.reference".into()))?;
    let frames = s.op.image_dims().2;
    let schedule = loaded_schedule(cfg)?;
    let configs = cfg
        .compare_labels()?
        .into_iter()
        .map(|label| {
            let config = cfg.solver_view(Some(&label)).solver_config(frames, schedule.as_ref())?;
            Ok(LabeledConfig { label, config })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let report = compare_structures(&s.kspace, &s.op, &configs, truth)?;
    let table = report.to_csv();
    if let Some(path) = cfg.optional("io.report") {
        write_file(Path::new(path), &table)?;
    }
    if let Some(dir) = cfg.optional("io.output") {
        for (c, r) in configs.iter().zip(&report.reports) {
            write_file(&Path::new(dir).join(format!("{}_trace.csv", c.label)), r.to_csv())?;
        }
    }
    Ok(table.trim_end().to_string())
}

/// Runs one command and returns its summary text.
pub fn execute(command: Command, cfg: &RunConfig) -> CliResult<String> {
    if let Some(path) = cfg.optional("io.effective_config") {
        write_file(Path::new(path), cfg.to_text())?;
    }
    match command {
        Command::Mask => cmd_mask(cfg),
        Command::Phantom => cmd_phantom(cfg),
        Command::Simulate => cmd_simulate(cfg),
        Command::Recon => cmd_recon(cfg),
        Command::Tune => cmd_tune(cfg),
        Command::Eval => cmd_eval(cfg),
        Command::Compare => cmd_compare(cfg),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = resolve_config(&cli).and_then(|cfg| execute(cli.command, &cfg));
    match result {
        Ok(summary) => {
            if !cli.quiet {
                println!("{summary}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
