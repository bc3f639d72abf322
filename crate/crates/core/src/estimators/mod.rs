//! Estimators of the signal: the maximum-likelihood estimator over the
//! piecewise-constant class (practical ascent and exhaustive net search), the
//! piecewise-constant projection, and the oversampled sufficient-statistic
//! estimator.

mod ascent;
mod levels;
mod net;
mod projection;
mod sufficient;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ascent::{mle_grid_ascent, mle_projected_ascent, moment_initializer, AscentOutcome};
pub use net::{count_net_candidates, mle_net_search, mle_net_search_with_cap, NetOutcome, DEFAULT_CANDIDATE_CAP};
pub use projection::{project_piecewise_constant, project_with_residual, SegmentFit};
pub use sufficient::{sufficient_statistic, sufficient_statistic_estimate};

/// Settings of the multi-start projected ascent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Initial step along the curvature-scaled ascent direction (1 = full
    /// scoring step).
    pub step_init: f64,
    pub step_shrink: f64,
    /// Stop once the largest coordinate move of a full step drops below this.
    pub tol_grad: f64,
    pub restarts: usize,
    pub project_every: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 30,
            step_init: 1.0,
            step_shrink: 0.5,
            tol_grad: 1e-6,
            restarts: 2,
            project_every: 5,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iters > 0
            && self.step_init > 0.0
            && self.step_shrink > 0.0
            && self.step_shrink < 1.0
            && self.tol_grad > 0.0
            && self.restarts > 0
            && self.project_every > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "optimizer settings must be positive with step_shrink < 1: {self:?}"
            )))
        }
    }
}

/// Finite level grid and piece budget for the exhaustive net search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub level_grid: Vec<f64>,
    pub max_pieces: usize,
}

impl NetSpec {
    pub fn new(level_grid: Vec<f64>, max_pieces: usize) -> Result<Self> {
        let spec = Self {
            level_grid,
            max_pieces,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `levels` equally spaced values covering `[x_min, x_max]`.
    pub fn uniform(x_min: f64, x_max: f64, levels: usize, max_pieces: usize) -> Result<Self> {
        if levels < 2 {
            return Err(Error::InvalidParameter("a uniform grid needs at least 2 levels".into()));
        }
        let step = (x_max - x_min) / (levels - 1) as f64;
        let mut grid: Vec<f64> = (0..levels).map(|i| x_min + step * i as f64).collect();
        grid[levels - 1] = x_max;
        Self::new(grid, max_pieces)
    }

    pub fn validate(&self) -> Result<()> {
        if self.level_grid.is_empty() {
            return Err(Error::InvalidParameter("level grid is empty".into()));
        }
        if self.level_grid[0] <= 0.0 || self.level_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter(
                "level grid must be positive and strictly increasing".into(),
            ));
        }
        if self.max_pieces == 0 {
            return Err(Error::InvalidParameter("max_pieces must be positive".into()));
        }
        Ok(())
    }

    pub fn x_min(&self) -> f64 {
        self.level_grid[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.level_grid.last().expect("validated nonempty")
    }
}
