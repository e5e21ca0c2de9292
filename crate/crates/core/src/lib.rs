//! Double-kernel estimation of Monte Carlo sensitivities.

pub mod bandwidth;
pub mod config;
pub mod baselines;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod kernel;
pub mod models;
pub mod neighbors;
pub mod quadrature;
pub mod randomization;
pub mod rng;

pub use error::{Error, Result};
