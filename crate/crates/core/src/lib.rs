//! Hidden semi-Markov models for toroidal time series.
//!
//! Observations are pairs of angles with a bivariate wrapped Cauchy law in
//! each regime. Regime dwell times follow a discrete-time proportional-hazards
//! regression on time-varying covariates, and the model is fitted by EM on
//! the `(state, dwell)` augmented chain.

pub mod circular;
pub mod dwell_hazard;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod seeds;
pub mod semi_markov;

pub use error::{Error, Result};
