//! Effective geometry Monte Carlo (EG-MC) simulation of molecular
//! communication channels.
//!
//! Particles released from a point transmitter diffuse by Brownian steps
//! until an absorbing receiver captures them. A finite time step makes
//! naive Monte Carlo absorb too late: particles overshoot the boundary and
//! may cross in and out of it between two recorded steps. EG-MC inflates
//! the receiver by `alpha * sqrt(D * dt)`, which cancels that bias for a
//! suitably calibrated `alpha`.
//!
//! The crate is organised as:
//!
//! - [`rng`]: seeded random streams, the Gaussian step kernel and particle storage.
//! - [`analytic`]: closed-form hitting rate, cumulative absorption and density for
//!   a spherical absorber in unbounded 3D space.
//! - [`engines`]: the 1D toy model and the 3D spherical-receiver simulators.
//! - [`metrics`]: ISDCD, reduced chi-squared, Poisson noise profiling, relative
//!   inaccuracy and the locality check.
//! - [`calibration`]: least-squares estimation of the optimal `alpha`.
//! - [`harness`]: experiment configuration, orchestration and CSV/JSON export.
//!
//! Lengths are in micrometres and times in seconds throughout.

pub mod analytic;
pub mod calibration;
pub mod engines;
mod error;
pub mod fit;
pub mod harness;
pub mod metrics;
pub mod quad;
pub mod rng;

pub use analytic::{AnalyticCurve, ChannelGeometry};
pub use calibration::{CalibrationResult, FitCoefficients};
pub use engines::{AbsorptionRecord, Receiver1D, RunConfig};
pub use error::{Error, Result};
pub use metrics::ErrorReport;

pub use rng::{ParticleEnsemble, RngStream, StepKernel};

/// EG-MC boundary shift used throughout for illustration and comparison runs.
pub const DEFAULT_ALPHA: f64 = 0.8235;

/// Particle count used when a configuration does not specify one.
pub const DEFAULT_PARTICLES: usize = 100_000;
