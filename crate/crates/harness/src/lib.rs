//! Monte Carlo experiments over the speckle model: configured sweeps,
//! log-log rate fits, varying against shared operators, and the
//! concentration check suite.

pub mod compare;
pub mod config;
pub mod error;
pub mod io;
pub mod stats;
pub mod sweep;
pub mod verify;

pub use compare::{compare_varying_unvarying, CompareReport};
pub use config::{parse_config, EstimatorKind, SweepConfig};
pub use error::{HarnessError, Result};
pub use stats::{fit_loglog_slope, SlopeFit};
pub use sweep::{execute_sweep, run_sweep, SweepOutcome, SweepRecord};
