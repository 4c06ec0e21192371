//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Numeric arguments select a subset.

mod oracles;

use std::process::ExitCode;
use std::time::Instant;

use dynrecon::acquisition::{
    make_equispaced_mask, make_radial_mask, make_vds_mask, make_vista_like_mask, AcquisitionOperator, KSpaceData,
    SamplingMask,
};
use dynrecon::cli::{execute, Command};
use dynrecon::config::RunConfig;
use dynrecon::io::{load_jotl, save_jotl, JotlData, JotlError, JotlTensor};
use dynrecon::metrics::psnr_images;
use dynrecon::phantom::{make_phantom, make_synthetic_csm, PhantomKind, PhantomSpec};
use dynrecon::prox::{
    ast, ast_thresholds, soft_threshold, soft_threshold_scalar, svt_matrix, AttentionParams, Channelization,
    SparseThreshold, ThresholdSpec,
};
use dynrecon::solvers::{
    csa_reconstruct, ista_reconstruct, Acceleration, IterationParams, Prior, ReconReport, RunOptions, SolverSchedule,
};
use dynrecon::tuner::{spsa_tune, SpsaGains, TrainingSet};
use dynrecon::{DynamicImage, TransformKind, TransformSpec};
use ndarray::Array4;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use oracles::{
    frob, nuclear_norm_eig, random_complex, random_image, random_matrix, relative_gap, st_grid_oracle,
    svt_objective,
};

type Outcome = Result<String, String>;

/// Frozen from the seeded oracle run of the recovery regression.
const RECOVERY_PSNR_DB: f64 = 40.665;
/// Frozen from the seeded oracle run of the tuner on the 24×24×8 suite.
const TUNER_INIT_LOSS: f64 = 33.40386208030152;
const TUNER_BEST_LOSS_BITS: u64 = 0x403d_deae_d17f_cf8e;

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, fn() -> Outcome); 12] = [
        (1, "adjoint correctness", adjoint_correctness),
        (2, "proximal-operator oracles", prox_oracles),
        (3, "transform unitarity", transform_unitarity),
        (4, "degenerate-weight equivalence", degenerate_weights),
        (5, "convex-configuration monotonicity", monotonicity),
        (6, "recovery regression", recovery_regression),
        (7, "acceleration benefit", acceleration_benefit),
        (8, "AST consistency", ast_consistency),
        (9, "tuner efficacy", tuner_efficacy),
        (10, "structure-comparison harness", comparison_harness),
        (11, "scaling smoke test", scaling),
        (12, "JOTL format", jotl_format),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let started = Instant::now();
        let outcome = run();
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id} ({name}): PASS [{secs:.1}s] {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id} ({name}): FAIL [{secs:.1}s] {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn all_masks(h: usize, w: usize, t: usize, seed: u64) -> Vec<SamplingMask> {
    vec![
        make_vds_mask(h, w, t, 4.0, seed).unwrap(),
        make_radial_mask(h, w, t, 16, seed).unwrap(),
        make_equispaced_mask(h, w, t, 4, 8).unwrap(),
        make_vista_like_mask(h, w, t, 4.0, seed).unwrap(),
        SamplingMask::full(h, w, t),
    ]
}

fn random_kspace(rng: &mut ChaCha8Rng, op: &AcquisitionOperator) -> KSpaceData {
    let (h, w, t) = op.image_dims();
    let samples = Array4::from_shape_fn((op.coils(), h, w, t), |_| random_complex(rng));
    KSpaceData::masked(samples, op.mask()).unwrap()
}

fn adjoint_correctness() -> Outcome {
    let started = Instant::now();
    let (h, w, t) = (64, 64, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for mask in all_masks(h, w, t, 3) {
        for coils in [1, 4] {
            let csm = (coils > 1).then(|| make_synthetic_csm(h, w, coils, 5).unwrap());
            let pattern = mask.pattern;
            let op = AcquisitionOperator::new(mask.clone(), csm).map_err(err)?;
            for _ in 0..50 {
                let x = random_image(&mut rng, h, w, t);
                let y = random_kspace(&mut rng, &op);
                let lhs = op.forward(&x).map_err(err)?.inner(&y).map_err(err)?;
                let rhs = x.inner(&op.adjoint(&y).map_err(err)?).map_err(err)?;
                let rel = (lhs - rhs).norm() / (x.norm() * y.norm());
                worst = worst.max(rel);
                check(rel <= 1e-10, || format!("{pattern} with {coils} coils: relative gap {rel:e}"))?;
                cases += 1;
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    check(secs < 30.0, || format!("runtime {secs:.1}s exceeds 30s"))?;
    Ok(format!("{cases} pairs, worst relative gap {worst:.2e}"))
}

fn prox_oracles() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut min_margin = f64::INFINITY;
    for _ in 0..20 {
        let m = random_matrix(&mut rng, 6, 6);
        for tau in [0.1, 0.5, 1.0] {
            let y = svt_matrix(&m, tau).map_err(err)?;
            let best = svt_objective(&y, &m, tau);
            for radius in [1e-2, 1e-3] {
                for _ in 0..1000 {
                    let dir = random_matrix(&mut rng, 6, 6);
                    let scale = radius / frob(&dir);
                    let p = &y + &dir.mapv(|z| z * scale);
                    let value = svt_objective(&p, &m, tau);
                    min_margin = min_margin.min(value - best);
                    check(value > best, || {
                        format!("perturbation at radius {radius} beats svt output for tau {tau}: {value} <= {best}")
                    })?;
                }
            }
            let gap = (nuclear_norm_eig(&y) - dynrecon::prox::nuclear_norm(&y).map_err(err)?).abs();
            check(gap <= 1e-9, || format!("nuclear norm disagrees with eigen oracle by {gap:e}"))?;
        }
    }
    let mut worst_ratio = 0.0f64;
    for _ in 0..10_000 {
        let z = random_complex(&mut rng) * rng.random_range(0.01..3.0);
        let tau = rng.random_range(0.0..2.0);
        let (oracle, resolution) = st_grid_oracle(z, tau);
        let got = soft_threshold_scalar(z, tau);
        let dist = (got - oracle).norm();
        worst_ratio = worst_ratio.max(dist / resolution);
        check(dist <= resolution, || {
            format!("soft_threshold({z}, {tau}) = {got}, grid oracle {oracle} (resolution {resolution:e})")
        })?;
    }
    let secs = started.elapsed().as_secs_f64();
    check(secs < 60.0, || format!("runtime {secs:.1}s exceeds 60s"))?;
    Ok(format!(
        "min SVT objective margin {min_margin:.2e}, worst ST distance {worst_ratio:.3} grid steps"
    ))
}

fn transform_unitarity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for kind in TransformKind::ALL {
        let spec = TransformSpec::new(kind);
        for _ in 0..100 {
            let (h, w, t) = (rng.random_range(1..9), rng.random_range(1..9), rng.random_range(1..17));
            let x = random_image(&mut rng, h, w, t);
            let y = spec.apply(&x);
            let norm_gap = (y.norm() - x.norm()).abs() / x.norm();
            let back = spec.inverse(&y);
            let round_trip = relative_gap(&back, &x);
            let forward_trip = relative_gap(&spec.apply(&spec.inverse(&x)), &x);
            let e = norm_gap.max(round_trip).max(forward_trip);
            worst = worst.max(e);
            check(e <= 1e-12, || format!("{} on {h}x{w}x{t}: relative error {e:e}", kind.name()))?;
        }
    }
    Ok(format!("300 tensors, worst relative error {worst:.2e}"))
}

fn scenario(seed: u64, dims: (usize, usize, usize), kind: PhantomKind, mask: SamplingMask) -> (DynamicImage, AcquisitionOperator, KSpaceData) {
    let (h, w, t) = dims;
    let truth = make_phantom(&PhantomSpec::standard().with_dims(h, w, t).with_kind(kind).with_seed(seed)).unwrap();
    let op = AcquisitionOperator::new(mask, None).unwrap();
    let b = op.forward(&truth).unwrap();
    (truth, op, b)
}

fn compare_traces(a: &ReconReport, b: &ReconReport) -> Result<f64, String> {
    check(a.trace.len() == b.trace.len(), || format!("trace lengths {} vs {}", a.trace.len(), b.trace.len()))?;
    let mut worst = 0.0f64;
    for (ra, rb) in a.trace.iter().zip(&b.trace) {
        for (va, vb) in [
            (ra.fidelity, rb.fidelity),
            (ra.ttnn, rb.ttnn),
            (ra.l1, rb.l1),
            (ra.objective, rb.objective),
        ] {
            let gap = (va - vb).abs() / va.abs().max(1.0);
            worst = worst.max(gap);
            check(gap <= 1e-10, || format!("iteration {}: {va} vs {vb}", ra.iteration))?;
        }
    }
    let image_gap = relative_gap(&a.final_image, &b.final_image);
    check(image_gap <= 1e-10, || format!("final images differ by {image_gap:e}"))?;
    Ok(worst.max(image_gap))
}

fn degenerate_weights() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let kinds = [PhantomKind::LowrankPlusSparse, PhantomKind::MovingEllipses, PhantomKind::Static];
    let mut worst = 0.0f64;
    for s in 0..5u64 {
        let (h, w, t) = (32, 32, 8);
        let mask = all_masks(h, w, t, s).swap_remove(s as usize % 4);
        let (_, op, b) = scenario(s, (h, w, t), kinds[s as usize % kinds.len()], mask);
        let transforms = [TransformSpec::identity(), TransformSpec::dft(), TransformSpec::dct()];
        let mut params = IterationParams::new_default();
        params.mu = rng.random_range(0.5..1.0);
        params.lr_threshold = ThresholdSpec::absolute(rng.random_range(0.02..0.2));
        params.sp_threshold = if s % 2 == 0 {
            SparseThreshold::Absolute(rng.random_range(0.005..0.05))
        } else {
            SparseThreshold::Attention(AttentionParams::energy(1, rng.random_range(0.1..0.9), Channelization::Single))
        };
        params.lr_transform = transforms[rng.random_range(0..3)];
        params.sp_transform = transforms[rng.random_range(0..3)];
        for (omega1, prior) in [(1.0, Prior::LowRank), (0.0, Prior::Sparse)] {
            let mut p = params.clone();
            p.omega1 = omega1;
            let schedule = SolverSchedule::shared(15, p, Acceleration::AnalyticNesterov);
            let csa = csa_reconstruct(&b, &op, &schedule, &RunOptions::default()).map_err(err)?;
            let ista = ista_reconstruct(&b, &op, prior, &schedule, &RunOptions::default()).map_err(err)?;
            worst = worst.max(compare_traces(&csa, &ista).map_err(|e| format!("scenario {s}, omega1 {omega1}: {e}"))?);
        }
    }
    Ok(format!("5 scenarios x 2 priors, N=15, worst relative gap {worst:.2e}"))
}

fn convex_schedule(acceleration: Acceleration) -> SolverSchedule {
    let params = IterationParams::absolute(1.0, 0.05, 0.01, 0.5, TransformSpec::identity());
    SolverSchedule::shared(50, params, acceleration)
}

fn convex_problem(seed: u64) -> (AcquisitionOperator, KSpaceData) {
    let mask = make_vds_mask(64, 64, 8, 4.0, seed).unwrap();
    let (_, op, b) = scenario(seed, (64, 64, 8), PhantomKind::LowrankPlusSparse, mask);
    (op, b)
}

fn monotonicity() -> Outcome {
    let schedule = convex_schedule(Acceleration::None);
    let mut max_increase = f64::NEG_INFINITY;
    for seed in 0..10 {
        let (op, b) = convex_problem(seed);
        let r = csa_reconstruct(&b, &op, &schedule, &RunOptions::default()).map_err(err)?;
        check(r.trace.len() == 50, || format!("seed {seed}: {} iterations", r.trace.len()))?;
        for pair in r.trace.windows(2) {
            let inc = pair[1].objective - pair[0].objective;
            max_increase = max_increase.max(inc);
            check(inc <= 1e-7, || {
                format!("seed {seed}: objective rises by {inc:e} at iteration {}", pair[1].iteration)
            })?;
        }
    }
    Ok(format!("10 seeds x 50 iterations, largest step change {max_increase:.3e}"))
}

fn recovery_regression() -> Outcome {
    let started = Instant::now();
    let truth = make_phantom(&PhantomSpec::standard()).map_err(err)?;
    let op = AcquisitionOperator::new(make_vds_mask(128, 128, 16, 4.0, 0).map_err(err)?, None).map_err(err)?;
    let b = op.forward(&truth).map_err(err)?;
    let zf = psnr_images(&op.adjoint(&b).map_err(err)?, &truth).map_err(err)?;
    let r = csa_reconstruct(&b, &op, &SolverSchedule::default(), &RunOptions::default()).map_err(err)?;
    let psnr = psnr_images(&r.final_image, &truth).map_err(err)?;
    let secs = started.elapsed().as_secs_f64();
    check(psnr >= zf + 3.0, || format!("psnr {psnr:.3} dB below zero-filled {zf:.3} + 3 dB"))?;
    check((psnr - RECOVERY_PSNR_DB).abs() <= 0.1, || {
        format!("psnr {psnr:.4} dB outside frozen {RECOVERY_PSNR_DB} +/- 0.1 dB")
    })?;
    check(secs < 120.0, || format!("runtime {secs:.1}s exceeds 120s"))?;
    Ok(format!("psnr {psnr:.4} dB vs zero-filled {zf:.4} dB"))
}

fn acceleration_benefit() -> Outcome {
    let plain = convex_schedule(Acceleration::None);
    let fast = convex_schedule(Acceleration::AnalyticNesterov);
    let mut wins = 0;
    let mut reached = Vec::new();
    for seed in 0..10 {
        let (op, b) = convex_problem(seed);
        let target = csa_reconstruct(&b, &op, &plain, &RunOptions::default()).map_err(err)?.final_objective();
        let accel = csa_reconstruct(&b, &op, &fast, &RunOptions::default()).map_err(err)?;
        let hit = accel.iterations_to(target);
        if hit.is_some_and(|n| n <= plain.iterations) {
            wins += 1;
        }
        reached.push(hit.map_or("-".to_string(), |n| n.to_string()));
    }
    let detail = format!("{wins}/10 seeds, iterations to target [{}]", reached.join(","));
    check(wins >= 8, || detail.clone())?;
    Ok(detail)
}

fn ast_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let (nc, h, w, t) = (rng.random_range(1..6), rng.random_range(2..7), rng.random_range(2..7), rng.random_range(1..5));
        let channels = Array4::from_shape_fn((nc, h, w, t), |_| random_complex(&mut rng));
        let params = AttentionParams::fc_zero(nc, rng.random_range(1..20), Channelization::Frames);
        let tau = ast_thresholds(&channels, &params).map_err(err)?;
        for (i, c) in channels.outer_iter().enumerate() {
            let mut sum = 0.0;
            for z in c.iter() {
                sum += z.norm();
            }
            let f = sum / c.len() as f64;
            let direct = c.iter().map(|z| (z.re * z.re + z.im * z.im).sqrt()).sum::<f64>() / c.len() as f64;
            check((f - direct).abs() <= 1e-12 * f, || format!("trial {trial}: pooled magnitude {f} vs {direct}"))?;
            check(tau[i] == 0.5 * f, || format!("trial {trial}, channel {i}: tau {} vs 0.5 f = {}", tau[i], 0.5 * f))?;
        }
        // Channels rescaled to a common mean magnitude share one threshold.
        let level = rng.random_range(0.2..2.0);
        let mut uniform = channels.clone();
        for mut c in uniform.outer_iter_mut() {
            let mean = c.iter().map(|z| z.norm()).sum::<f64>() / c.len() as f64;
            c.mapv_inplace(|z| z * (level / mean));
        }
        let alpha = rng.random_range(0.1..1.5);
        let omega2 = rng.random_range(0.2..1.0);
        for (params, scale) in [
            (AttentionParams::energy(nc, alpha, Channelization::Frames), alpha),
            (AttentionParams::fc_zero(nc, 4, Channelization::Frames), 0.5),
        ] {
            let got = ast(&uniform, &params, omega2).map_err(err)?;
            let thr = scale * level / omega2;
            for (g, c) in got.outer_iter().zip(uniform.outer_iter()) {
                let image = DynamicImage::new(c.to_owned()).map_err(err)?;
                let expected = soft_threshold(&image, thr).map_err(err)?;
                let gap = g.iter().zip(expected.as_slice()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                worst = worst.max(gap);
                check(gap <= 1e-12, || format!("trial {trial}: ast differs from soft_threshold by {gap:e}"))?;
            }
        }
    }
    Ok(format!("20 trials, tau = 0.5 f exactly, worst uniform-tau gap {worst:.2e}"))
}

fn tuner_run() -> Result<(f64, f64), String> {
    let base = PhantomSpec::standard().with_dims(24, 24, 8);
    let train = TrainingSet::phantom_suite(&base, 4, 4.0, 0).map_err(err)?;
    let mut init = SolverSchedule::default();
    init.iterations = 5;
    let init = init.to_per_iteration();
    let r = spsa_tune(&init, &train, 200, 0, &SpsaGains::default()).map_err(err)?;
    Ok((r.init_loss, r.best_loss))
}

fn tuner_efficacy() -> Outcome {
    let (init, best) = tuner_run()?;
    check(best <= init, || format!("best loss {best} exceeds init loss {init}"))?;
    check(init.to_bits() == TUNER_INIT_LOSS.to_bits(), || format!("init loss {init:?} vs frozen {TUNER_INIT_LOSS:?}"))?;
    check(best.to_bits() == TUNER_BEST_LOSS_BITS, || {
        format!("best loss {best:?} ({:#018x}) vs frozen {:#018x}", best.to_bits(), TUNER_BEST_LOSS_BITS)
    })?;
    let (init2, best2) = tuner_run()?;
    check(init2.to_bits() == init.to_bits() && best2.to_bits() == best.to_bits(), || {
        format!("re-run gave {init2:?} -> {best2:?}, first run {init:?} -> {best:?}")
    })?;
    Ok(format!(
        "loss {init:.6} -> {best:.6} ({:.2}% lower), reproduced bit-exactly",
        100.0 * (init - best) / init
    ))
}

fn comparison_harness() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let table_path = dir.path().join("compare.csv");
    let mut cfg = RunConfig::default();
    cfg.set("io.report", table_path.to_str().unwrap()).map_err(err)?;
    cfg.set("io.output", dir.path().to_str().unwrap()).map_err(err)?;
    execute(Command::Compare, &cfg).map_err(err)?;
    let table = std::fs::read_to_string(&table_path).map_err(err)?;
    let mut lines = table.lines();
    let header: Vec<&str> = lines.next().ok_or("empty table")?.split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).ok_or(format!("missing column {name}"));
    let (label_col, psnr_col) = (col("label")?, col("psnr_db")?);
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    check(rows.iter().all(|r| r.len() == header.len()), || "ragged table".into())?;
    let psnr_of = |label: &str| -> Result<f64, String> {
        let row = rows.iter().find(|r| r[label_col] == label).ok_or(format!("missing row {label}"))?;
        row[psnr_col].parse::<f64>().map_err(err)
    };
    let zf = psnr_of("zero-filled")?;
    let mut parts = vec![format!("zero-filled {zf:.3}")];
    for label in ["csa", "lps", "slr-admm"] {
        let psnr = psnr_of(label)?;
        check(psnr.is_finite() && psnr > zf, || format!("{label} psnr {psnr} not above zero-filled {zf}"))?;
        check(dir.path().join(format!("{label}_trace.csv")).exists(), || format!("missing {label} trace"))?;
        parts.push(format!("{label} {psnr:.3}"));
    }
    check(rows.len() == 4, || format!("{} rows, expected 4", rows.len()))?;
    Ok(format!("psnr dB: {}", parts.join(", ")))
}

fn median_csa_time(frames: usize) -> Result<f64, String> {
    let mask = make_vds_mask(128, 128, frames, 4.0, 0).map_err(err)?;
    let (_, op, b) = scenario(0, (128, 128, frames), PhantomKind::LowrankPlusSparse, mask);
    let schedule = SolverSchedule::default();
    let mut times = Vec::new();
    for _ in 0..3 {
        let started = Instant::now();
        csa_reconstruct(&b, &op, &schedule, &RunOptions::default()).map_err(err)?;
        times.push(started.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    Ok(times[1])
}

fn scaling() -> Outcome {
    let t8 = median_csa_time(8)?;
    let t16 = median_csa_time(16)?;
    let ratio = t16 / t8;
    let detail = format!("median {t8:.2}s at T=8, {t16:.2}s at T=16, ratio {ratio:.2}");
    check((1.0..=3.0).contains(&ratio), || detail.clone())?;
    Ok(detail)
}

fn random_tensor(rng: &mut ChaCha8Rng) -> JotlTensor {
    let ndims = rng.random_range(1..=4);
    let dims: Vec<usize> = (0..ndims).map(|_| rng.random_range(1..=5)).collect();
    let n: usize = dims.iter().product();
    // Raw bit patterns cover NaN payloads, infinities and subnormals.
    let data = match rng.random_range(0..3) {
        0 => JotlData::Complex64(
            (0..n)
                .map(|_| num_complex::Complex32::new(f32::from_bits(rng.random()), f32::from_bits(rng.random())))
                .collect(),
        ),
        1 => JotlData::Complex128(
            (0..n)
                .map(|_| Complex64::new(f64::from_bits(rng.random()), f64::from_bits(rng.random())))
                .collect(),
        ),
        _ => JotlData::Real64((0..n).map(|_| f64::from_bits(rng.random())).collect()),
    };
    JotlTensor::new(dims, data).unwrap()
}

fn bits(data: &JotlData) -> Vec<u64> {
    match data {
        JotlData::Complex64(v) => v.iter().flat_map(|z| [z.re.to_bits() as u64, z.im.to_bits() as u64]).collect(),
        JotlData::Complex128(v) => v.iter().flat_map(|z| [z.re.to_bits(), z.im.to_bits()]).collect(),
        JotlData::Real64(v) => v.iter().map(|x| x.to_bits()).collect(),
    }
}

fn jotl_format() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let path = dir.path().join("t.jotl");
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut per_dtype = [0usize; 3];
    for i in 0..10_000 {
        let t = random_tensor(&mut rng);
        save_jotl(&path, &t).map_err(err)?;
        let back = load_jotl(&path).map_err(err)?;
        check(back.dims == t.dims && back.data.dtype() == t.data.dtype() && bits(&back.data) == bits(&t.data), || {
            format!("round trip {i} differs for dims {:?}", t.dims)
        })?;
        per_dtype[t.data.dtype() as usize] += 1;
    }

    let t = JotlTensor::new(vec![4, 4, 4], JotlData::Complex128(vec![Complex64::new(1.0, -2.0); 64])).unwrap();
    let good = t.encode();
    let header = 4 + 2 + 1 + 1 + 3 * 4;
    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    let truncated = &good[..good.len() - 5];
    let mut trailing = good.clone();
    trailing.extend_from_slice(&[0, 1, 2]);
    let mut bad_version = good.clone();
    bad_version[4] = 2;
    let mut bad_dtype = good.clone();
    bad_dtype[6] = 9;
    let cases: [(&str, &[u8], fn(&JotlError) -> bool); 5] = [
        ("bad magic", &bad_magic, |e| matches!(e, JotlError::BadMagic(_))),
        ("truncated", truncated, |e| {
            matches!(e, JotlError::Truncated { expected, actual } if *expected == 20 + 64 * 16 && *actual == 20 + 64 * 16 - 5)
        }),
        ("trailing bytes", &trailing, |e| matches!(e, JotlError::TrailingBytes { .. })),
        ("unsupported version", &bad_version, |e| matches!(e, JotlError::UnsupportedVersion(2))),
        ("unsupported dtype", &bad_dtype, |e| matches!(e, JotlError::UnsupportedDtype(9))),
    ];
    check(header == 20, || "header size".into())?;
    for (name, bytes, expected) in cases {
        std::fs::write(&path, bytes).map_err(err)?;
        match load_jotl(&path) {
            Ok(_) => return Err(format!("{name}: file loaded without error")),
            Err(e) => check(expected(&e), || format!("{name}: wrong error {e}"))?,
        }
    }
    Ok(format!(
        "10000 round trips bit-exact (c64 {}, c128 {}, real64 {}), 5 corruption classes distinct",
        per_dtype[0], per_dtype[1], per_dtype[2]
    ))
}
