//! Monte Carlo sweeps over a grid of cells.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use speckle_core::estimators::{
    mle_net_search, mle_projected_ascent, sufficient_statistic_estimate, NetSpec, OptimizerConfig,
};
use speckle_core::model::{generate_trial_instance, mse, sample_signal_class};
use speckle_core::rng::derive_seed;
use speckle_core::{Bounds, InstanceSpec, ModelInstance, ObservationSet, RandomStream, Role, Signal};

use crate::config::{EstimatorKind, SweepConfig};
use crate::error::{HarnessError, Result};
use crate::stats::mean_ci;

pub const CSV_HEADER: [&str; 12] = [
    "m",
    "n",
    "L",
    "sigma_z",
    "k",
    "estimator",
    "trials",
    "mean_mse",
    "ci_half_width",
    "predicted_rate",
    "mean_runtime_ms",
    "error",
];

/// Grid coordinates of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub m: usize,
    pub n: usize,
    pub looks: usize,
    pub sigma_z: f64,
    pub k: usize,
}

impl Cell {
    /// `max(σ⁴, m², n²) · k · log n / (m² n L)`.
    pub fn predicted_rate(&self) -> f64 {
        let (m, n) = (self.m as f64, self.n as f64);
        let lead = self.sigma_z.powi(4).max(m * m).max(n * n);
        lead * self.k as f64 * n.ln() / (m * m * n * self.looks as f64)
    }

    /// Seed of the cell, a function of `base` and the coordinates only, so a
    /// cell draws the same instances whatever grid it appears in.
    pub fn seed(&self, base: u64) -> u64 {
        [self.m as u64, self.n as u64, self.looks as u64, self.sigma_z.to_bits(), self.k as u64]
            .into_iter()
            .fold(base, derive_seed)
    }

    pub fn spec(&self, shared_operators: bool) -> InstanceSpec {
        InstanceSpec::new(self.m, self.n, self.looks, self.sigma_z, shared_operators)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub cell: Cell,
    pub estimator: EstimatorKind,
    pub trials: usize,
    pub mean_mse: Option<f64>,
    pub ci_half_width: Option<f64>,
    pub predicted_rate: f64,
    pub mean_runtime_ms: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub cell: Cell,
    pub trial: usize,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutcome {
    pub records: Vec<SweepRecord>,
    /// Per-trial errors of the successful cells, in cell then trial order.
    pub trials: Vec<TrialRecord>,
}

impl SweepOutcome {
    pub fn all_failed(&self) -> bool {
        self.records.iter().all(|r| r.error.is_some())
    }
}

/// Cells in CSV column order: `m` outermost, `k` innermost.
pub fn cells(cfg: &SweepConfig) -> Vec<Cell> {
    let mut out = Vec::with_capacity(cfg.cell_count());
    for &m in &cfg.m {
        for &n in &cfg.n {
            for &looks in &cfg.looks {
                for &sigma_z in &cfg.sigma_z {
                    for &k in &cfg.k {
                        out.push(Cell { m, n, looks, sigma_z, k });
                    }
                }
            }
        }
    }
    out
}

/// Everything a trial needs besides its index.
#[derive(Debug, Clone)]
pub struct TrialSetup<'a> {
    pub cell: Cell,
    pub seed: u64,
    pub estimator: EstimatorKind,
    pub shared_operators: bool,
    pub x_min: f64,
    pub x_max: f64,
    pub net_levels: usize,
    pub fixed_signal: Option<&'a [f64]>,
    pub optimizer: &'a OptimizerConfig,
}

impl TrialSetup<'_> {
    pub fn truth(&self, trial: usize) -> speckle_core::Result<Signal> {
        let Cell { n, k, .. } = self.cell;
        match self.fixed_signal {
            Some(v) => Signal::new(v.to_vec(), Bounds::new(self.x_min, self.x_max)?, Some(k)),
            None => {
                let stream = RandomStream::new(self.seed, trial as u64, 0, Role::Signal);
                sample_signal_class(&stream, n, k, self.x_min, self.x_max)
            }
        }
    }

    pub fn instance(&self, trial: usize, truth: &Signal) -> speckle_core::Result<(ModelInstance, ObservationSet)> {
        generate_trial_instance(self.seed, trial as u64, &self.cell.spec(self.shared_operators), truth)
    }

    pub fn estimate(&self, inst: &ModelInstance, obs: &ObservationSet, truth: &Signal) -> speckle_core::Result<Signal> {
        let k = self.cell.k;
        match self.estimator {
            EstimatorKind::MleAscent => {
                Ok(mle_projected_ascent(inst, obs, k, self.x_min, self.x_max, self.optimizer)?.signal)
            }
            EstimatorKind::NetSearch => {
                let net = NetSpec::uniform(self.x_min, self.x_max, self.net_levels, k)?;
                Ok(mle_net_search(inst, obs, &net)?.signal)
            }
            EstimatorKind::SufficientStatistic => sufficient_statistic_estimate(inst, obs, k, self.x_min, self.x_max),
            EstimatorKind::Truth => Ok(truth.clone()),
        }
    }

    /// MSE of one trial and its wall time in milliseconds.
    pub fn run(&self, trial: usize) -> speckle_core::Result<(f64, f64)> {
        let truth = self.truth(trial)?;
        let (inst, obs) = self.instance(trial, &truth)?;
        let start = Instant::now();
        let est = self.estimate(&inst, &obs, &truth)?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        Ok((mse(&est, &truth)?, ms))
    }
}

fn setup<'a>(cfg: &'a SweepConfig, cell: Cell) -> TrialSetup<'a> {
    TrialSetup {
        cell,
        seed: cell.seed(cfg.seed),
        estimator: cfg.estimator,
        shared_operators: cfg.shared_operators,
        x_min: cfg.x_min,
        x_max: cfg.x_max,
        net_levels: cfg.net_levels,
        fixed_signal: cfg.fixed_signal.as_deref(),
        optimizer: &cfg.optimizer,
    }
}

fn in_pool<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(job()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| HarnessError::Validation(vec![format!("cannot start {w} workers: {e}")]))?;
            Ok(pool.install(job))
        }
    }
}

/// Run every (cell, trial) pair concurrently and aggregate per cell in trial
/// order. A cell with any failing trial reports the first error by trial
/// index and no statistics.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    let cells = cells(cfg);
    let setups: Vec<TrialSetup> = cells.iter().map(|&c| setup(cfg, c)).collect();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.trials).map(move |t| (c, t)))
        .collect();
    let results: Vec<speckle_core::Result<(f64, f64)>> =
        in_pool(cfg.workers, || jobs.par_iter().map(|&(c, t)| setups[c].run(t)).collect())?;

    let mut records = Vec::with_capacity(cells.len());
    let mut trials = Vec::new();
    for (c, chunk) in results.chunks(cfg.trials).enumerate() {
        let cell = cells[c];
        let mut record = SweepRecord {
            cell,
            estimator: cfg.estimator,
            trials: cfg.trials,
            mean_mse: None,
            ci_half_width: None,
            predicted_rate: cell.predicted_rate(),
            mean_runtime_ms: None,
            error: None,
        };
        if let Some(Err(e)) = chunk.iter().find(|r| r.is_err()) {
            log::warn!("cell {cell:?} skipped: {e}");
            record.error = Some(e.kind().to_string());
        } else {
            let ok: Vec<(f64, f64)> = chunk.iter().map(|r| *r.as_ref().expect("checked above")).collect();
            let mses: Vec<f64> = ok.iter().map(|p| p.0).collect();
            let (mean, ci) = mean_ci(&mses);
            record.mean_mse = Some(mean);
            record.ci_half_width = Some(ci);
            if cfg.timing {
                record.mean_runtime_ms = Some(ok.iter().map(|p| p.1).sum::<f64>() / ok.len() as f64);
            }
            trials.extend(mses.iter().enumerate().map(|(t, &mse)| TrialRecord { cell, trial: t, mse }));
        }
        records.push(record);
    }
    Ok(SweepOutcome { records, trials })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_csv<W: Write>(records: &[SweepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.cell.m.to_string(),
            r.cell.n.to_string(),
            r.cell.looks.to_string(),
            r.cell.sigma_z.to_string(),
            r.cell.k.to_string(),
            r.estimator.id().to_string(),
            r.trials.to_string(),
            opt(r.mean_mse),
            opt(r.ci_half_width),
            r.predicted_rate.to_string(),
            opt(r.mean_runtime_ms),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io("<csv>", e))?;
    Ok(())
}

pub fn csv_string(records: &[SweepRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(records, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn write_trial_log<W: Write>(outcome: &SweepOutcome, estimator: EstimatorKind, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["m", "n", "L", "sigma_z", "k", "estimator", "trial", "mse"])?;
    for t in &outcome.trials {
        w.write_record([
            t.cell.m.to_string(),
            t.cell.n.to_string(),
            t.cell.looks.to_string(),
            t.cell.sigma_z.to_string(),
            t.cell.k.to_string(),
            estimator.id().to_string(),
            t.trial.to_string(),
            t.mse.to_string(),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io("<trial log>", e))?;
    Ok(())
}

/// Gnuplot script drawing mean MSE against L on log-log axes, one curve per
/// remaining coordinate combination.
pub fn gnuplot_script(csv_path: &Path, records: &[SweepRecord]) -> String {
    let mut keys: Vec<(usize, usize, u64, usize)> = records
        .iter()
        .map(|r| (r.cell.m, r.cell.n, r.cell.sigma_z.to_bits(), r.cell.k))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    let mut s = String::new();
    s.push_str("set datafile separator ','\nset logscale xy\nset key outside\n");
    s.push_str("set xlabel 'L'\nset ylabel 'mean MSE'\n");
    let curves: Vec<String> = keys
        .iter()
        .map(|&(m, n, sz, k)| {
            let sigma = f64::from_bits(sz);
            format!(
                "'{}' using ($1=={m} && $2=={n} && $4=={sigma} && $5=={k} ? $3 : 1/0):8:9 \
                 with yerrorlines title 'm={m} n={n} sigma_z={sigma} k={k}'",
                csv_path.display()
            )
        })
        .collect();
    s.push_str("plot ");
    s.push_str(&curves.join(", \\\n     "));
    s.push('\n');
    s
}

fn write_file(path: &Path, f: impl FnOnce(&mut std::fs::File) -> Result<()>) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    f(&mut file)
}

/// Run the sweep and write the CSV plus the optional trial log and plot
/// script named in the configuration.
pub fn execute_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    let outcome = run_sweep(cfg)?;
    match &cfg.output {
        Some(path) => write_file(path, |f| write_csv(&outcome.records, f))?,
        None => write_csv(&outcome.records, std::io::stdout().lock())?,
    }
    if let Some(path) = &cfg.trial_log {
        write_file(path, |f| write_trial_log(&outcome, cfg.estimator, f))?;
    }
    if let Some(path) = &cfg.gnuplot {
        let csv_path = cfg.output.clone().unwrap_or_else(|| "sweep.csv".into());
        let script = gnuplot_script(&csv_path, &outcome.records);
        std::fs::write(path, script).map_err(|e| HarnessError::io(path, e))?;
    }
    Ok(outcome)
}
