//! Bayesian emissions projection: a population, technology and capital
//! growth model with logistic substitution between energy sources, a VAR(1)
//! residual likelihood, MCMC calibration, posterior predictive projection,
//! Sobol sensitivity analysis and hold-out validation.

pub mod calibration;
pub mod error;
pub mod io;
pub mod model;
pub mod observations;
pub mod params;
pub mod posterior;
pub mod prior;
pub mod projection;
pub mod scenario;
pub mod sensitivity;
pub mod stats;
pub mod synthetic;
pub mod validation;
pub mod var;

pub use error::{Error, Result};
