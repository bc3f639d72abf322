//! Multilook speckle observation model, Gaussian likelihood, estimators,
//! Fano lower bounds and Monte Carlo concentration checks.

pub mod concentration;
pub mod error;
pub mod estimators;
pub mod likelihood;
pub mod lowerbound;
pub mod model;
pub mod rng;

pub use error::{Error, Result};
pub use model::{Bounds, InstanceSpec, ModelInstance, ObservationSet, Signal};
pub use rng::{RandomStream, Role};
