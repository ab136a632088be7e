//! Gaussian process regression over mixed spatial supports.
//!
//! Observations and predictions may be points, line intervals or
//! axis-aligned boxes. Covariances between supports are evaluated in closed
//! form from the antiderivatives of separable stationary kernels.

pub mod covariance;
pub mod error;
pub mod fusion;
pub mod gp;
pub mod hyperopt;
pub mod io;
pub mod kernels;
pub mod metrics;
pub mod synthetic;

pub use covariance::{KernelSpec, SupportSample};
pub use error::{Error, Result};
pub use gp::{GpModel, PosteriorField};
pub use hyperopt::{OptimConfig, OptimResult};
pub use kernels::KernelFamily;
