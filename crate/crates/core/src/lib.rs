//! Orthogonal additive (FANOVA) Gaussian-process regression with exact
//! Shapley attributions.
//!
//! * [`esp`]: elementary symmetric polynomials over scalars, vectors and matrices.
//! * [`kernels`]: measure-constrained one-dimensional kernels and the additive kernel.
//! * [`gp`]: exact GP fitting, prediction and hyperparameter search.
//! * [`explain_local`]: stochastic Shapley values (mean and covariance) at a query.
//! * [`explain_global`]: variance-based global attributions.
//! * [`oracle`]: brute-force subset enumerations for testing.
//! * [`datasets`]: synthetic generators, CSV ingestion, average rank.
//! * [`evaluation`]: rank evaluation and the timing protocol.

#![allow(clippy::needless_range_loop)]

pub mod datasets;
pub mod error;
pub mod esp;
pub mod evaluation;
pub mod explain_global;
pub mod explain_local;
pub mod gp;
pub mod kernels;
pub mod oracle;

pub use error::{Error, Result};
pub use esp::{esp_newton, esp_stable, esp_stable_canonical, Carrier, EspTable, Shape};
pub use explain_global::{explain_global, global_shapley, GlobalExplanation, GlobalOptions, LMatrices};
pub use explain_local::{
    dominance_matrix, explain_local, ssv_covariance, ssv_mean_all, ssv_variance_all, LocalExplanation,
};
pub use gp::{
    fit_hyperparameters, load_model, save_model, Dataset, FitConfig, FittedModel, Hyperparameters, MeasureKind,
    ModelParams, SearchOptions,
};
pub use kernels::{AdditiveKernel, BaseKernel, ConstrainedKernel, FeatureMeasure, OrderVariances};
