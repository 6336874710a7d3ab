//! Identification of the transition matrix of an autonomous linear system
//! `x_{t+1} = A x_t`, `y_t = C x_t`, from fully or partially observed
//! trajectories.
//!
//! Modules:
//! - [`model`]: trajectory containers and simulation.
//! - [`realization`]: Markov parameters, block Hankel matrices, Silverman
//!   rank test, Ho-style minimal realization.
//! - [`full_obs`]: least squares, ridge, dual form, gradient descent,
//!   recursive updates and large-penalty asymptotics for `C = I`.
//! - [`partial_obs`]: lifted estimator, adjoint-state gradient and curvature,
//!   safeguarded gradient descent over `(A, v)`.
//! - [`smoother`]: Riccati decoupling of the forward-backward Euler system.
//! - [`altmin`]: alternating minimization in states and `A`, plus the
//!   experimental dual-control step.
//! - [`asymptotics`]: first-order expansion of the penalized problem as
//!   `gamma = mu -> infinity`.
//! - [`io`]: CSV / JSON file formats.

pub mod altmin;
pub mod asymptotics;
mod error;
pub mod full_obs;
pub mod io;
pub mod linalg;
pub mod model;
pub mod partial_obs;
pub mod realization;
pub mod report;
pub mod smoother;

pub use error::{Error, Result};
pub use model::{HyperParams, Matrix, ObservedData, Trajectory, Vector};
pub use report::{DescentReport, Termination};

/// Library version embedded in run records.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
