//! Batch experiment runner: Monte-Carlo NMSE-vs-SNR sweeps, convergence
//! studies over the path-product or reflector-count grids, and the
//! closed-form complexity report.
//!
//! Trials are independent work items on a configurable worker pool. Each
//! trial derives its own random stream from `(seed, trial index)` and writes
//! into its own result slot, so aggregate output is byte-identical for any
//! worker count.

mod config;
mod report;
mod svg;

pub use config::{ConfigOverlay, ExperimentConfig};
pub use report::{
    emit_results, Algorithm, ConvergenceGroup, FlopRow, NmseRow, RunReport, SkippedPoint,
};
pub use svg::LineChart;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::time::Instant;

use crate::channel::{ar_evolve, build_channels, draw_gains, draw_geometry, ArFadingConfig};
use crate::error::{Error, Result};
use crate::estimation::{krf_baseline, nmse, nmse_mat, stack_blocks, CombinedChannelEstimate};
use crate::pilot::{simulate_block, PilotDesign, ReceivedBlock};
use crate::tensor::{CMat, Tensor3};

/// Slack allowed when checking that the alternating fit error never grows.
pub const MONOTONICITY_SLACK: f64 = 1e-9;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent, reproducible random stream for one trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(splitmix64(seed) ^ trial))
}

/// Results of the three estimators at one SNR point of one trial.
#[derive(Clone, Debug)]
struct SnrOutcome {
    ls_nmse: f64,
    ls_nmse_block: f64,
    krf_nmse: f64,
    krf_nmse_block: f64,
    als_nmse: f64,
    als_nmse_block: f64,
    als_iterations: usize,
    als_converged: bool,
    monotonicity_violations: usize,
}

#[derive(Clone, Debug)]
struct TrialOutcome {
    per_snr: Vec<SnrOutcome>,
}

fn block_nmse_mean(truth: &[CMat], est: &[CMat]) -> Result<f64> {
    let mut acc = 0.0;
    for (t, e) in truth.iter().zip(est) {
        acc += nmse_mat(t, e)?;
    }
    Ok(acc / truth.len() as f64)
}

fn tensor_blocks(t: &Tensor3) -> Result<Vec<CMat>> {
    (0..t.dims().2).map(|k| t.frontal_slice(k)).collect()
}

/// One full Monte-Carlo trial: draw a channel, then per SNR simulate the
/// frame, run LS, KRF, and the alternating fit, and score everything against
/// the true combined channel.
fn run_trial(cfg: &ExperimentConfig, design: &PilotDesign, trial: u64) -> Result<TrialOutcome> {
    let mut rng = trial_rng(cfg.seed, trial);
    let geom = draw_geometry(&mut rng, cfg.l1, cfg.l2);
    let alpha = draw_gains(&mut rng, cfg.l1)?;
    let ar = ArFadingConfig::new(cfg.ar_lambda, cfg.k)?;
    let beta = ar_evolve(cfg.l2, &ar, &mut rng)?;
    let chan = build_channels(&geom, &alpha, &beta, cfg.m, cfg.q, cfg.n)?;

    let truth_blocks: Vec<CMat> = (0..cfg.k)
        .map(|k| chan.combined_block(k))
        .collect::<Result<_>>()?;
    let truth = stack_blocks(&truth_blocks)?;

    let mut per_snr = Vec::with_capacity(cfg.snr_grid_db.len());
    for &snr_db in &cfg.snr_grid_db {
        let received: Vec<ReceivedBlock> = (0..cfg.k)
            .map(|k| simulate_block(k, &chan.g, &chan.h[k], design, snr_db, &mut rng))
            .collect::<Result<_>>()?;
        let ls = CombinedChannelEstimate::from_received(&received, design)?;

        let krf_blocks: Vec<CMat> = ls
            .blocks
            .iter()
            .map(|b| krf_baseline(b, cfg.m, cfg.q, cfg.n).map(|e| e.r_hat))
            .collect::<Result<_>>()?;
        let krf_tensor = stack_blocks(&krf_blocks)?;

        // Normalize to unit Frobenius norm so the absolute stopping
        // threshold is scale-free, then rescale the reconstruction.
        let scale = ls.tensor.fro_norm();
        let als_input = if scale > 0.0 {
            ls.tensor.scaled(1.0 / scale)
        } else {
            ls.tensor.clone()
        };
        let als = crate::estimation::als_fit(&als_input, cfg.rank(), cfg.eps, cfg.i_max, &mut rng)?;
        let als_tensor = als.reconstruct()?.scaled(if scale > 0.0 { scale } else { 1.0 });

        let violations = als
            .error_trace
            .windows(2)
            .filter(|w| w[1] > w[0] + MONOTONICITY_SLACK)
            .count();

        per_snr.push(SnrOutcome {
            ls_nmse: nmse(&truth, &ls.tensor)?,
            ls_nmse_block: block_nmse_mean(&truth_blocks, &ls.blocks)?,
            krf_nmse: nmse(&truth, &krf_tensor)?,
            krf_nmse_block: block_nmse_mean(&truth_blocks, &krf_blocks)?,
            als_nmse: nmse(&truth, &als_tensor)?,
            als_nmse_block: block_nmse_mean(&truth_blocks, &tensor_blocks(&als_tensor)?)?,
            als_iterations: als.iterations,
            als_converged: als.converged,
            monotonicity_violations: violations,
        });
    }
    Ok(TrialOutcome { per_snr })
}

/// Run all trials of a config on a worker pool, preserving trial order.
fn run_trials(cfg: &ExperimentConfig, design: &PilotDesign) -> Result<Vec<TrialOutcome>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| {
        (0..cfg.trials as u64)
            .into_par_iter()
            .map(|trial| run_trial(cfg, design, trial))
            .collect::<Result<Vec<_>>>()
    })
}

fn median(sorted: &[usize]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    }
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Reduce per-trial outcomes into per-(algorithm, SNR) rows, in fixed order:
/// algorithms LS, KRF, ALS, each over the SNR grid.
fn aggregate(cfg: &ExperimentConfig, outcomes: &[TrialOutcome]) -> Vec<NmseRow> {
    let trials = outcomes.len().max(1) as f64;
    let mut rows = Vec::new();
    for algorithm in Algorithm::ALL {
        for (si, &snr_db) in cfg.snr_grid_db.iter().enumerate() {
            let pick = |o: &TrialOutcome| -> (f64, f64) {
                let s = &o.per_snr[si];
                match algorithm {
                    Algorithm::Ls => (s.ls_nmse, s.ls_nmse_block),
                    Algorithm::Krf => (s.krf_nmse, s.krf_nmse_block),
                    Algorithm::Als => (s.als_nmse, s.als_nmse_block),
                }
            };
            let mut nmse_sum = 0.0;
            let mut block_sum = 0.0;
            for o in outcomes {
                let (t, b) = pick(o);
                nmse_sum += t;
                block_sum += b;
            }
            let (iterations_median, iterations_mean, nonconverged_frac) =
                if algorithm == Algorithm::Als {
                    let mut iters: Vec<usize> =
                        outcomes.iter().map(|o| o.per_snr[si].als_iterations).collect();
                    iters.sort_unstable();
                    let mean = iters.iter().sum::<usize>() as f64 / trials;
                    let bad = outcomes
                        .iter()
                        .filter(|o| !o.per_snr[si].als_converged)
                        .count() as f64;
                    (median(&iters), mean, bad / trials)
                } else {
                    (0.0, 0.0, 0.0)
                };
            let mean_nmse = nmse_sum / trials;
            rows.push(NmseRow {
                algorithm,
                snr_db,
                nmse: mean_nmse,
                nmse_db: db(mean_nmse),
                nmse_block: block_sum / trials,
                iterations_median,
                iterations_mean,
                nonconverged_frac,
            });
        }
    }
    rows
}

fn sweep_internals(cfg: &ExperimentConfig) -> Result<(Vec<NmseRow>, usize)> {
    cfg.ensure_runnable()?;
    let design = PilotDesign::new(cfg.m, cfg.q, cfg.n, cfg.t)?;
    design.omega_pinv()?; // materialize once, outside the parallel region
    let outcomes = run_trials(cfg, &design)?;
    let violations = outcomes
        .iter()
        .flat_map(|o| &o.per_snr)
        .map(|s| s.monotonicity_violations)
        .sum();
    Ok((aggregate(cfg, &outcomes), violations))
}

/// NMSE-vs-SNR sweep of all three estimators over the configured grid.
pub fn run_nmse_sweep(cfg: &ExperimentConfig) -> Result<RunReport> {
    let start = Instant::now();
    let (rows, violations) = sweep_internals(cfg)?;
    let mut report = RunReport::new("nmse_sweep", cfg.clone());
    report.rows = rows;
    report.monotonicity_violations = violations;
    report.wall_clock_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// One trial of the full pipeline, reported in the same row format.
pub fn run_single(cfg: &ExperimentConfig) -> Result<RunReport> {
    let start = Instant::now();
    let mut one = cfg.clone();
    one.trials = 1;
    let (rows, violations) = sweep_internals(&one)?;
    let mut report = RunReport::new("single_run", one);
    report.rows = rows;
    report.monotonicity_violations = violations;
    report.wall_clock_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Which scenario axis a convergence study walks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VaryAxis {
    /// Sweep the model rank grid `l1l2_grid`, splitting each product into
    /// its most-square `(l1, l2)` pair.
    PathProducts,
    /// Sweep the reflector grid `n_grid`, scaling `t = q * n` to keep the
    /// per-block recovery exactly determined.
    ReflectorCounts,
}

/// Most-square factor pair `(a, b)` of `p` with `a <= b`.
fn most_square_pair(p: usize) -> (usize, usize) {
    let mut best = (1, p);
    let mut d = 1;
    while d * d <= p {
        if p % d == 0 {
            best = (d, p / d);
        }
        d += 1;
    }
    best
}

fn skippable(e: &Error) -> bool {
    matches!(
        e,
        Error::Identifiability(_)
            | Error::NotPowerOfTwo { .. }
            | Error::QExceedsT { .. }
            | Error::NExceedsT { .. }
            | Error::NonFactorableArray { .. }
            | Error::Config(_)
    )
}

/// Iteration study over one scenario axis. Grid points that fail a recovery
/// condition (or cannot form the schedules) are recorded as skipped, never
/// silently dropped.
pub fn run_convergence_study(cfg: &ExperimentConfig, vary: VaryAxis) -> Result<RunReport> {
    let start = Instant::now();
    cfg.validate()?;

    let points: Vec<(String, ExperimentConfig)> = match vary {
        VaryAxis::PathProducts => cfg
            .l1l2_grid
            .iter()
            .map(|&p| {
                let (l1, l2) = most_square_pair(p);
                let mut point = cfg.clone();
                point.l1 = l1;
                point.l2 = l2;
                (format!("l1l2_{p}"), point)
            })
            .collect(),
        VaryAxis::ReflectorCounts => cfg
            .n_grid
            .iter()
            .map(|&n| {
                let mut point = cfg.clone();
                point.n = n;
                point.t = cfg.q * n;
                (format!("n_{n}"), point)
            })
            .collect(),
    };

    let mut report = RunReport::new(
        match vary {
            VaryAxis::PathProducts => "convergence_paths",
            VaryAxis::ReflectorCounts => "convergence_reflectors",
        },
        cfg.clone(),
    );
    for (label, point) in points {
        match sweep_internals(&point) {
            Ok((rows, violations)) => {
                report.monotonicity_violations += violations;
                report.groups.push(ConvergenceGroup { label, rows });
            }
            Err(e) if skippable(&e) => {
                report.skipped.push(SkippedPoint {
                    label,
                    reason: e.to_string(),
                });
            }
            Err(e) => return Err(e),
        }
    }
    report.wall_clock_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Closed-form flop order of the per-frame LS recovery: `k (m q n)^3`.
pub fn ls_flops(m: usize, q: usize, n: usize, k: usize) -> f64 {
    k as f64 * ((m * q * n) as f64).powi(3)
}

/// Closed-form flop order of the rank-one refinement: `k m q n`.
pub fn krf_flops(m: usize, q: usize, n: usize, k: usize) -> f64 {
    (k * m * q * n) as f64
}

/// Closed-form flop order of the alternating fit:
/// `k m q n iters rank^2 (1 + k/n + k/(m q))`.
pub fn als_flops(m: usize, q: usize, n: usize, k: usize, rank: usize, iters: usize) -> f64 {
    let mqn = (m * q * n) as f64;
    let kf = k as f64;
    kf * mqn
        * iters as f64
        * ((rank * rank) as f64)
        * (1.0 + kf / n as f64 + kf / ((m * q) as f64))
}

/// Median iteration count of the alternating fit, measured over a small
/// batch of trials at a 20 dB reference point of the configured scenario.
pub fn measure_als_iterations(cfg: &ExperimentConfig) -> Result<usize> {
    let mut probe = cfg.clone();
    probe.trials = cfg.trials.min(20).max(1);
    probe.snr_grid_db = vec![20.0];
    probe.ensure_runnable()?;
    let design = PilotDesign::new(probe.m, probe.q, probe.n, probe.t)?;
    design.omega_pinv()?;
    let outcomes = run_trials(&probe, &design)?;
    let mut iters: Vec<usize> = outcomes.iter().map(|o| o.per_snr[0].als_iterations).collect();
    iters.sort_unstable();
    Ok(median(&iters).round() as usize)
}

/// Evaluate the flop-order formulas over the reflector grid. The iteration
/// count comes from the config when supplied, otherwise it is measured.
/// Totals for the refinement algorithms include the shared LS front-end.
pub fn complexity_report(cfg: &ExperimentConfig) -> Result<RunReport> {
    let start = Instant::now();
    cfg.validate()?;
    let als_iter = match cfg.als_iter {
        Some(i) => i,
        None => measure_als_iterations(cfg)?,
    };
    let mut report = RunReport::new("complexity", cfg.clone());
    report.als_iter_used = Some(als_iter);
    for &n in &cfg.n_grid {
        let ls = ls_flops(cfg.m, cfg.q, n, cfg.k);
        let krf = krf_flops(cfg.m, cfg.q, n, cfg.k);
        let als = als_flops(cfg.m, cfg.q, n, cfg.k, cfg.rank(), als_iter);
        report.flops.push(FlopRow {
            n,
            ls,
            krf,
            krf_total: krf + ls,
            als,
            als_total: als + ls,
        });
    }
    report.wall_clock_s = start.elapsed().as_secs_f64();
    Ok(report)
}
