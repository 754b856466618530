//! p-biased Fourier analysis of Boolean functions and score-function gradient
//! estimators for binary latent variables.
//!
//! - [`cube`]: points, product distributions, sampling and rho-correlated resampling
//! - [`fourier`]: truth tables, the p-biased transform, norms and Monte Carlo coefficients
//! - [`operators`]: discrete derivative, noise operator, exact and finite-difference gradients,
//!   hypercontractivity checks
//! - [`estimators`]: REINFORCE and its control-variate variants, the enumeration oracle,
//!   and the variance benchmark
//! - [`sbn`]: a small sigmoid belief network trained with any of the estimators

pub mod cube;
pub mod error;
pub mod estimators;
pub mod fourier;
pub mod operators;
pub mod sbn;

pub use cube::{BooleanPoint, ProductDistribution, SubsetIndex};
pub use error::{Error, Result};
pub use estimators::{EstimatorConfig, EstimatorKind, GradientProblem, VarianceReport};
pub use fourier::{BooleanFunction, FourierExpansion};
