//! Estimation of marginal natural direct and indirect effects.
//!
//! The crate provides the building blocks of a mediation-analysis toolchain:
//!
//! - [`data`]: columnar datasets with declared variable roles and CSV ingestion
//! - [`formula`]: a small model-formula language (`y ~ a + b*c + ns(x,4)`) and
//!   design-matrix construction
//! - [`glm`]: weighted canonical-link GLMs (Gaussian/identity, binomial/logit)
//!   with the mean-recovery property that the weighted-model estimators rely on
//! - [`weights`]: inverse-probability and cross-world weights, with three
//!   interchangeable estimation routes for the cross-world weights
//! - [`meddensity`]: factorized conditional mediator densities (fit, evaluate,
//!   simulate)
//! - [`balance`]: multi-way weighted balance diagnostics
//! - [`estimators`]: the full estimator menu and its robustness registry
//! - [`inference`]: the continuous-weights (Dirichlet) bootstrap
//! - [`simlab`]: synthetic data generation, a Monte-Carlo truth oracle, and a
//!   bias/coverage experiment runner

pub mod balance;
pub mod data;
pub mod error;
pub mod estimators;
pub mod formula;
pub mod glm;
pub mod inference;
pub mod meddensity;
pub mod rng;
pub mod simlab;
pub mod weights;

pub(crate) mod wstats;

pub use error::{Error, Result};
