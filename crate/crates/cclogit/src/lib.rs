//! Semi-supervised maximum likelihood for case-control logistic regression.
//!
//! A case-control labeled sample identifies the slope of a logistic model
//! but not its intercept. Combining it with an unlabeled covariate sample
//! restores intercept identifiability; this crate maximizes the joint
//! likelihood, profiling the covariate distribution as a discrete
//! distribution with one jump mass per observed covariate vector.
//!
//! Modules:
//! - [`model`]: domain types, the logistic link, the discretized
//!   log-likelihood and its theta derivatives.
//! - [`solver`]: the alternating maximization over theta and the masses.
//! - [`inference`]: standard errors and Wald intervals from the
//!   block-structured negative Hessian.
//! - [`baseline`]: the labeled-only prospective fit.
//! - [`simulation`]: seeded Monte Carlo studies with coverage summaries.
//! - [`prediction`]: AUC, cutoff selection, confusion-matrix metrics, MAD.
//! - [`io`]: CSV ingestion and JSON report shapes for the CLI.

pub mod baseline;
pub mod error;
pub mod inference;
pub mod io;
pub mod model;
pub mod prediction;
pub mod simulation;
pub mod solver;

pub use error::{Error, Result};
pub use model::{
    FitResult, FitWarning, JumpWeights, LabeledObservation, SemiSupervisedDataset, Theta,
};
pub use solver::{fit_mle, SolverOptions};
