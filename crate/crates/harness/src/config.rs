//! Sweep configuration files (TOML).
//!
//! ```toml
//! n = 64
//! m = [8, 16]
//! L = [8, 16, 32]
//! sigma_z = [0.1]
//! k = 2
//! trials = 200
//! seed = 7
//! estimator = "mle_ascent"
//! output = "sweep.csv"
//!
//! [optimizer]
//! restarts = 3
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use speckle_core::estimators::OptimizerConfig;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    MleAscent,
    NetSearch,
    SufficientStatistic,
    /// Returns the true signal. Test hook for the pipeline itself.
    Truth,
}

impl EstimatorKind {
    pub fn id(self) -> &'static str {
        match self {
            Self::MleAscent => "mle_ascent",
            Self::NetSearch => "net_search",
            Self::SufficientStatistic => "sufficient_statistic",
            Self::Truth => "truth",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for EstimatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mle_ascent" => Ok(Self::MleAscent),
            "net_search" => Ok(Self::NetSearch),
            "sufficient_statistic" => Ok(Self::SufficientStatistic),
            "truth" => Ok(Self::Truth),
            other => Err(format!(
                "unknown estimator `{other}` (expected mle_ascent, net_search, sufficient_statistic or truth)"
            )),
        }
    }
}

/// A grid key may be written as a scalar or a list.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            Self::One(v) => vec![v],
            Self::Many(v) => v,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    n: OneOrMany<usize>,
    m: OneOrMany<usize>,
    #[serde(rename = "L")]
    looks: OneOrMany<usize>,
    sigma_z: Option<OneOrMany<f64>>,
    k: OneOrMany<usize>,
    x_min: Option<f64>,
    x_max: Option<f64>,
    trials: usize,
    seed: Option<u64>,
    estimator: Option<EstimatorKind>,
    shared_operators: Option<bool>,
    workers: Option<usize>,
    output: Option<PathBuf>,
    net_levels: Option<usize>,
    fixed_signal: Option<Vec<f64>>,
    timing: Option<bool>,
    trial_log: Option<PathBuf>,
    gnuplot: Option<PathBuf>,
    optimizer: Option<OptimizerConfig>,
}

pub const DEFAULT_SIGMA_Z: f64 = 0.1;
pub const DEFAULT_X_MIN: f64 = 1.0;
pub const DEFAULT_X_MAX: f64 = 2.0;
pub const DEFAULT_SEED: u64 = 0;
/// Level grid size used by `net_search`.
pub const DEFAULT_NET_LEVELS: usize = 33;
pub const MIN_RELIABLE_TRIALS: usize = 30;

/// A validated sweep: the Cartesian product of the grids, `trials` Monte
/// Carlo repetitions per cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    pub looks: Vec<usize>,
    pub sigma_z: Vec<f64>,
    pub k: Vec<usize>,
    pub x_min: f64,
    pub x_max: f64,
    pub trials: usize,
    pub seed: u64,
    pub estimator: EstimatorKind,
    pub shared_operators: bool,
    /// Worker threads; `None` uses every core.
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
    pub net_levels: usize,
    /// Fixed true signal for worst-case probing instead of per-trial draws.
    pub fixed_signal: Option<Vec<f64>>,
    /// Fill `mean_runtime_ms`. Off by default so output is byte-stable.
    pub timing: bool,
    pub trial_log: Option<PathBuf>,
    pub gnuplot: Option<PathBuf>,
    pub optimizer: OptimizerConfig,
}

impl SweepConfig {
    /// Single-cell configuration with every optional key at its default.
    pub fn single(n: usize, m: usize, looks: usize, sigma_z: f64, k: usize, trials: usize) -> Self {
        Self {
            n: vec![n],
            m: vec![m],
            looks: vec![looks],
            sigma_z: vec![sigma_z],
            k: vec![k],
            x_min: DEFAULT_X_MIN,
            x_max: DEFAULT_X_MAX,
            trials,
            seed: DEFAULT_SEED,
            estimator: EstimatorKind::MleAscent,
            shared_operators: false,
            workers: None,
            output: None,
            net_levels: DEFAULT_NET_LEVELS,
            fixed_signal: None,
            timing: false,
            trial_log: None,
            gnuplot: None,
            optimizer: OptimizerConfig::default(),
        }
    }

    /// Every violation, not just the first.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        for (name, empty) in [
            ("n", self.n.is_empty()),
            ("m", self.m.is_empty()),
            ("L", self.looks.is_empty()),
            ("sigma_z", self.sigma_z.is_empty()),
            ("k", self.k.is_empty()),
        ] {
            if empty {
                errs.push(format!("`{name}` grid is empty"));
            }
        }
        for (name, grid) in [("n", &self.n), ("m", &self.m), ("L", &self.looks), ("k", &self.k)] {
            if grid.contains(&0) {
                errs.push(format!("`{name}` entries must be positive"));
            }
        }
        if self.sigma_z.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            errs.push("`sigma_z` entries must be finite and nonnegative".into());
        }
        if self.trials == 0 {
            errs.push("`trials` must be at least 1".into());
        }
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_min < self.x_max) {
            errs.push(format!("need x_min < x_max, got [{}, {}]", self.x_min, self.x_max));
        }
        if self.workers == Some(0) {
            errs.push("`workers` must be at least 1".into());
        }
        for &k in &self.k {
            for &n in &self.n {
                if k > n {
                    errs.push(format!("k = {k} exceeds n = {n}"));
                }
            }
        }
        if self.estimator == EstimatorKind::SufficientStatistic {
            for &m in &self.m {
                for &n in &self.n {
                    if m < n {
                        errs.push(format!("sufficient_statistic needs m >= n, got m = {m}, n = {n}"));
                    }
                }
            }
        }
        if self.estimator == EstimatorKind::NetSearch && self.net_levels == 0 {
            errs.push("`net_levels` must be at least 1".into());
        }
        if let Some(x) = &self.fixed_signal {
            if self.n.iter().any(|&n| n != x.len()) {
                errs.push(format!("`fixed_signal` has length {} but n grid is {:?}", x.len(), self.n));
            }
            if x.iter().any(|v| !(self.x_min..=self.x_max).contains(v)) {
                errs.push("`fixed_signal` leaves the [x_min, x_max] box".into());
            }
        }
        if let Err(e) = self.optimizer.validate() {
            errs.push(e.to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Validation(errs))
        }
    }

    /// Conditions under which the rate theory does not apply. Reported, not
    /// enforced.
    pub fn regime_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.trials < MIN_RELIABLE_TRIALS {
            out.push(format!(
                "trials = {} < {MIN_RELIABLE_TRIALS}: normal-approximation CIs are unreliable",
                self.trials
            ));
        }
        for &n in &self.n {
            for &k in &self.k {
                let cap = (n as f64).powi(4) * k as f64 * (n as f64).ln();
                for &l in &self.looks {
                    if l as f64 > cap {
                        out.push(format!("L = {l} exceeds n^4 k log n = {cap:.3e} (n = {n}, k = {k})"));
                    }
                }
            }
        }
        if self.estimator == EstimatorKind::SufficientStatistic && self.sigma_z.iter().any(|&s| s > 0.0) {
            out.push("sufficient_statistic assumes sigma_z = 0; noisy cells are biased upward".into());
        }
        if self.estimator == EstimatorKind::MleAscent || self.estimator == EstimatorKind::NetSearch {
            for &m in &self.m {
                for &n in &self.n {
                    if m > n && self.sigma_z.contains(&0.0) {
                        out.push(format!(
                            "sigma_z = 0 with m = {m} > n = {n}: the likelihood is undefined"
                        ));
                    }
                }
            }
        }
        out
    }

    /// Number of cells in the grid product.
    pub fn cell_count(&self) -> usize {
        self.n.len() * self.m.len() * self.looks.len() * self.sigma_z.len() * self.k.len()
    }
}

/// Parse and validate a configuration document.
pub fn parse_config_str(text: &str, origin: &Path) -> Result<SweepConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| HarnessError::Parse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })?;
    let cfg = SweepConfig {
        n: raw.n.into_vec(),
        m: raw.m.into_vec(),
        looks: raw.looks.into_vec(),
        sigma_z: raw.sigma_z.map_or_else(|| vec![DEFAULT_SIGMA_Z], OneOrMany::into_vec),
        k: raw.k.into_vec(),
        x_min: raw.x_min.unwrap_or(DEFAULT_X_MIN),
        x_max: raw.x_max.unwrap_or(DEFAULT_X_MAX),
        trials: raw.trials,
        seed: raw.seed.unwrap_or(DEFAULT_SEED),
        estimator: raw.estimator.unwrap_or(EstimatorKind::MleAscent),
        shared_operators: raw.shared_operators.unwrap_or(false),
        workers: raw.workers,
        output: raw.output,
        net_levels: raw.net_levels.unwrap_or(DEFAULT_NET_LEVELS),
        fixed_signal: raw.fixed_signal,
        timing: raw.timing.unwrap_or(false),
        trial_log: raw.trial_log,
        gnuplot: raw.gnuplot,
        optimizer: raw.optimizer.unwrap_or_default(),
    };
    cfg.validate()?;
    for w in cfg.regime_warnings() {
        log::warn!("{w}");
    }
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<SweepConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_config_str(&text, path)
}
