//! Experiment configuration: scenario dimensions, sweep grids, and run
//! controls, loadable from a flat TOML key/value file with CLI overrides
//! applied on top.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimation::{check_identifiability, IdentifiabilityCheck};

/// All scenario scalars and run controls for one experiment.
///
/// `Default` is the full-scale reference profile (10000 trials);
/// [`ExperimentConfig::desk_profile`] is the fast profile used by default in
/// the CLI and CI.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// BS receive antennas.
    pub m: usize,
    /// UE transmit antennas.
    pub q: usize,
    /// Reflecting elements.
    pub n: usize,
    /// Training slots per block.
    pub t: usize,
    /// Fading blocks per frame.
    pub k: usize,
    /// BS-side path count.
    pub l1: usize,
    /// UE-side path count.
    pub l2: usize,
    /// Training SNR grid in dB.
    pub snr_grid_db: Vec<f64>,
    /// Monte-Carlo trials per grid point.
    pub trials: usize,
    /// Base seed; per-trial streams are derived from it.
    pub seed: u64,
    /// Convergence threshold on consecutive squared fit errors.
    pub eps: f64,
    /// Iteration cap for the alternating fit.
    pub i_max: usize,
    /// Block-fading correlation coefficient.
    pub ar_lambda: f64,
    /// Worker threads (0 = all cores). Output is identical for any value.
    pub workers: usize,
    /// Path-product grid for the convergence study.
    pub l1l2_grid: Vec<usize>,
    /// Reflector-count grid for the convergence study and complexity report.
    pub n_grid: Vec<usize>,
    /// Iteration count used by the complexity report; measured when absent.
    pub als_iter: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            m: 4,
            q: 4,
            n: 16,
            t: 64,
            k: 5,
            l1: 2,
            l2: 2,
            snr_grid_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            trials: 10_000,
            seed: 1,
            eps: 1e-5,
            i_max: 100,
            ar_lambda: 0.75,
            workers: 0,
            l1l2_grid: vec![2, 4, 8, 16],
            n_grid: vec![16, 32, 64],
            als_iter: None,
        }
    }
}

impl ExperimentConfig {
    /// Full-scale reference profile (same as `Default`).
    pub fn paper_profile() -> Self {
        Self::default()
    }

    /// Fast profile for CI and interactive runs: 500 trials, same grids.
    pub fn desk_profile() -> Self {
        Self {
            trials: 500,
            ..Self::default()
        }
    }

    /// Parse a flat TOML file of config keys.
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn rank(&self) -> usize {
        self.l1 * self.l2
    }

    /// Basic sanity on the scalars, before any identifiability question.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("m", self.m),
            ("q", self.q),
            ("n", self.n),
            ("t", self.t),
            ("k", self.k),
            ("l1", self.l1),
            ("l2", self.l2),
            ("i_max", self.i_max),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        if self.snr_grid_db.is_empty() {
            return Err(Error::Config("snr_grid_db must be non-empty".into()));
        }
        if !self.snr_grid_db.iter().all(|s| s.is_finite() || *s == f64::INFINITY) {
            return Err(Error::Config("snr grid entries must be finite or +inf".into()));
        }
        if !(0.0..=1.0).contains(&self.ar_lambda) {
            return Err(Error::Config(format!(
                "ar_lambda {} outside [0, 1]",
                self.ar_lambda
            )));
        }
        if !self.eps.is_finite() || self.eps < 0.0 {
            return Err(Error::Config(format!("eps {} must be >= 0", self.eps)));
        }
        Ok(())
    }

    pub fn identifiability(&self) -> IdentifiabilityCheck {
        check_identifiability(self.m, self.q, self.n, self.k, self.t, self.l1, self.l2)
    }

    /// Reject the config before any computation if a recovery condition fails.
    pub fn ensure_runnable(&self) -> Result<()> {
        self.validate()?;
        self.identifiability().ensure()
    }
}

/// Optional per-field overrides, used both for partially-specified TOML
/// files and for CLI flags. Later layers win.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigOverlay {
    pub m: Option<usize>,
    pub q: Option<usize>,
    pub n: Option<usize>,
    pub t: Option<usize>,
    pub k: Option<usize>,
    pub l1: Option<usize>,
    pub l2: Option<usize>,
    pub snr_grid_db: Option<Vec<f64>>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub eps: Option<f64>,
    pub i_max: Option<usize>,
    pub ar_lambda: Option<f64>,
    pub workers: Option<usize>,
    pub l1l2_grid: Option<Vec<usize>>,
    pub n_grid: Option<Vec<usize>>,
    pub als_iter: Option<usize>,
}

impl ConfigOverlay {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { cfg.$field = v.clone(); })*
            };
        }
        take!(m, q, n, t, k, l1, l2, snr_grid_db, trials, seed, eps, i_max, ar_lambda, workers, l1l2_grid, n_grid);
        if self.als_iter.is_some() {
            cfg.als_iter = self.als_iter;
        }
    }
}
