//! Bayesian quantum state estimation with classical shadows: posterior
//! sampling over parametric state models, quantum and classical information
//! criteria, finite-difference Fisher numerics and a reproducible experiment
//! harness.

pub mod cli;
pub mod criteria;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod models;
pub mod posterior;
pub mod quantum;
pub mod shadows;
pub mod stats;
pub mod theory;

pub use error::{Error, Result};
