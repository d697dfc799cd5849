//! Sparse Gaussian process regression with variational knot selection.
//!
//! The crate covers exact GP regression, the DTC/FIC family of knot-based
//! approximations, the variational free energy (VFE) evidence lower bound
//! with analytic gradients, and a one-at-a-time knot selection loop whose
//! proposals come from Bayesian optimization or a best-of-random-subset
//! search.

pub mod error;
pub mod full_gp;
pub mod kernel;
pub mod knots;
mod linalg;
pub mod metrics;
pub mod optimizer;
pub mod predictive;
pub mod sparse;

pub use error::{GpError, Result};
pub use full_gp::FullGpModel;
pub use kernel::{InputMatrix, KernelParams};
pub use predictive::PredictiveDistribution;
pub use sparse::{Approximation, KnotGradient, KnotSet, Objective, SparseModel};
