//! Run reports and file emission: CSV tables with a fixed documented header,
//! SVG line plots, and a JSON manifest tying outputs to the exact config and
//! seed that produced them.
//!
//! CSV header for estimation experiments (one row per algorithm/SNR pair):
//!
//! ```text
//! algorithm,snr_db,nmse,nmse_db,iterations_median,nonconverged_frac,seed
//! ```
//!
//! `nmse` is the whole-tensor average over trials; the per-block average is
//! kept in memory on [`NmseRow`] for inspection. Iteration statistics are
//! zero for the non-iterative algorithms. The complexity table uses
//!
//! ```text
//! n,ls_flops,krf_flops,krf_total_flops,als_flops,als_total_flops,als_iter
//! ```
//!
//! where the `_total` columns include the shared LS front-end cost.

use serde::Serialize;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::svg::LineChart;
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Ls,
    Krf,
    Als,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Ls, Algorithm::Krf, Algorithm::Als];
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Ls => "ls",
            Algorithm::Krf => "krf",
            Algorithm::Als => "als",
        })
    }
}

/// Aggregated estimation quality at one (algorithm, SNR) grid point.
#[derive(Clone, Debug)]
pub struct NmseRow {
    pub algorithm: Algorithm,
    pub snr_db: f64,
    /// Mean whole-tensor NMSE over trials.
    pub nmse: f64,
    pub nmse_db: f64,
    /// Mean of per-block NMSE values (not written to CSV).
    pub nmse_block: f64,
    pub iterations_median: f64,
    pub iterations_mean: f64,
    /// Fraction of trials that hit the iteration cap unconverged.
    pub nonconverged_frac: f64,
}

/// One labelled grid point of a convergence study (e.g. `l1l2_4`, `n_64`).
#[derive(Clone, Debug)]
pub struct ConvergenceGroup {
    pub label: String,
    pub rows: Vec<NmseRow>,
}

/// Flop-order estimates for one reflector count, per the closed forms.
#[derive(Clone, Debug)]
pub struct FlopRow {
    pub n: usize,
    pub ls: f64,
    pub krf: f64,
    pub krf_total: f64,
    pub als: f64,
    pub als_total: f64,
}

/// A grid point that was rejected before computation, and why.
#[derive(Clone, Debug, Serialize)]
pub struct SkippedPoint {
    pub label: String,
    pub reason: String,
}

/// Everything one experiment produced.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub experiment: String,
    pub config: ExperimentConfig,
    /// Flat NMSE rows (sweep and single-run experiments).
    pub rows: Vec<NmseRow>,
    /// Grouped rows (convergence studies).
    pub groups: Vec<ConvergenceGroup>,
    /// Complexity table (complexity experiment).
    pub flops: Vec<FlopRow>,
    /// Iteration count the complexity table was evaluated with.
    pub als_iter_used: Option<usize>,
    pub skipped: Vec<SkippedPoint>,
    /// Iterations where a recorded fit error increased beyond slack.
    pub monotonicity_violations: usize,
    pub wall_clock_s: f64,
}

impl RunReport {
    pub fn new(experiment: impl Into<String>, config: ExperimentConfig) -> Self {
        Self {
            experiment: experiment.into(),
            config,
            rows: Vec::new(),
            groups: Vec::new(),
            flops: Vec::new(),
            als_iter_used: None,
            skipped: Vec::new(),
            monotonicity_violations: 0,
            wall_clock_s: 0.0,
        }
    }

    /// Rows of one algorithm, in grid order.
    pub fn rows_for(&self, algorithm: Algorithm) -> impl Iterator<Item = &NmseRow> {
        self.rows.iter().filter(move |r| r.algorithm == algorithm)
    }

    pub fn group(&self, label: &str) -> Option<&ConvergenceGroup> {
        self.groups.iter().find(|g| g.label == label)
    }

    /// Human-readable summary for terminal output.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "experiment: {} (seed {}, {:.2}s)\n",
            self.experiment, self.config.seed, self.wall_clock_s
        ));
        if !self.rows.is_empty() {
            out.push_str("algorithm  snr_db     nmse_db  iter_med  nonconv\n");
            for r in &self.rows {
                out.push_str(&format!(
                    "{:<9}  {:>6}  {:>10.3}  {:>8.1}  {:>7.3}\n",
                    r.algorithm.to_string(),
                    r.snr_db,
                    r.nmse_db,
                    r.iterations_median,
                    r.nonconverged_frac
                ));
            }
        }
        for g in &self.groups {
            out.push_str(&format!("[{}]\n", g.label));
            out.push_str("algorithm  snr_db     nmse_db  iter_med  nonconv\n");
            for r in &g.rows {
                out.push_str(&format!(
                    "{:<9}  {:>6}  {:>10.3}  {:>8.1}  {:>7.3}\n",
                    r.algorithm.to_string(),
                    r.snr_db,
                    r.nmse_db,
                    r.iterations_median,
                    r.nonconverged_frac
                ));
            }
        }
        if !self.flops.is_empty() {
            out.push_str(&format!(
                "flop orders (als_iter = {}):\n",
                self.als_iter_used.unwrap_or(0)
            ));
            out.push_str("     n      ls_flops       krf_total     als_total\n");
            for f in &self.flops {
                out.push_str(&format!(
                    "{:>6}  {:>12.4e}  {:>12.4e}  {:>12.4e}\n",
                    f.n, f.ls, f.krf_total, f.als_total
                ));
            }
        }
        for s in &self.skipped {
            out.push_str(&format!("skipped {}: {}\n", s.label, s.reason));
        }
        out
    }
}

const NMSE_HEADER: &str = "algorithm,snr_db,nmse,nmse_db,iterations_median,nonconverged_frac,seed";

fn write_nmse_csv(path: &Path, rows: &[NmseRow], seed: u64) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "{NMSE_HEADER}")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            r.algorithm, r.snr_db, r.nmse, r.nmse_db, r.iterations_median, r.nonconverged_frac, seed
        )?;
    }
    Ok(())
}

fn write_flops_csv(path: &Path, rows: &[FlopRow], als_iter: usize) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(
        f,
        "n,ls_flops,krf_flops,krf_total_flops,als_flops,als_total_flops,als_iter"
    )?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            r.n, r.ls, r.krf, r.krf_total, r.als, r.als_total, als_iter
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'a str,
    seed: u64,
    config: &'a ExperimentConfig,
    als_iter_used: Option<usize>,
    outputs: Vec<String>,
    skipped: &'a [SkippedPoint],
}

fn nmse_chart(title: &str, rows: &[NmseRow]) -> LineChart {
    let mut chart = LineChart::new(title, "training SNR [dB]", "NMSE [dB]");
    for algo in Algorithm::ALL {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.algorithm == algo && r.nmse_db.is_finite() && r.snr_db.is_finite())
            .map(|r| (r.snr_db, r.nmse_db))
            .collect();
        if !pts.is_empty() {
            chart.add_series(algo.to_string(), pts);
        }
    }
    chart
}

/// Write every table, plot, and the manifest for a report into `out_dir`.
/// Returns the created paths (manifest last).
pub fn emit_results(report: &RunReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut outputs: Vec<PathBuf> = Vec::new();
    let seed = report.config.seed;

    if report.groups.is_empty() && report.flops.is_empty() {
        let csv = out_dir.join(format!("{}.csv", report.experiment));
        write_nmse_csv(&csv, &report.rows, seed)?;
        outputs.push(csv);
        if report.rows.iter().any(|r| r.nmse_db.is_finite()) {
            let svg = out_dir.join(format!("{}.svg", report.experiment));
            fs::write(&svg, nmse_chart(&report.experiment, &report.rows).render())?;
            outputs.push(svg);
        }
    }

    for g in &report.groups {
        let csv = out_dir.join(format!("{}_{}.csv", report.experiment, g.label));
        write_nmse_csv(&csv, &g.rows, seed)?;
        outputs.push(csv);
    }
    if !report.groups.is_empty() {
        // one iteration-count chart across all grid points
        let mut chart = LineChart::new(
            &format!("{}: iterations to convergence", report.experiment),
            "training SNR [dB]",
            "median iterations",
        );
        for g in &report.groups {
            let pts: Vec<(f64, f64)> = g
                .rows
                .iter()
                .filter(|r| r.algorithm == Algorithm::Als && r.snr_db.is_finite())
                .map(|r| (r.snr_db, r.iterations_median))
                .collect();
            if !pts.is_empty() {
                chart.add_series(g.label.clone(), pts);
            }
        }
        let svg = out_dir.join(format!("{}.svg", report.experiment));
        fs::write(&svg, chart.render())?;
        outputs.push(svg);
    }

    if !report.flops.is_empty() {
        let csv = out_dir.join(format!("{}.csv", report.experiment));
        write_flops_csv(&csv, &report.flops, report.als_iter_used.unwrap_or(0))?;
        outputs.push(csv);

        let mut chart = LineChart::new(
            "flop-order estimates vs reflector count",
            "reflecting elements N",
            "log10(flops)",
        );
        let series: [(&str, fn(&FlopRow) -> f64); 3] = [
            ("ls", |r| r.ls),
            ("krf_total", |r| r.krf_total),
            ("als_total", |r| r.als_total),
        ];
        for (name, get) in series {
            let pts: Vec<(f64, f64)> = report
                .flops
                .iter()
                .filter(|r| get(r) > 0.0)
                .map(|r| (r.n as f64, get(r).log10()))
                .collect();
            chart.add_series(name.to_string(), pts);
        }
        let svg = out_dir.join(format!("{}.svg", report.experiment));
        fs::write(&svg, chart.render())?;
        outputs.push(svg);
    }

    let manifest = Manifest {
        experiment: &report.experiment,
        seed,
        config: &report.config,
        als_iter_used: report.als_iter_used,
        outputs: outputs
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect(),
        skipped: &report.skipped,
    };
    let manifest_path = out_dir.join("manifest.json");
    fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest)
            .map_err(|e| crate::error::Error::Config(e.to_string()))?,
    )?;
    outputs.push(manifest_path);
    Ok(outputs)
}
