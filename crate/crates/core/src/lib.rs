//! Demand-estimation benchmark on a simulated logit market.
//!
//! Two estimators of own-price elasticity are compared on panels with
//! controllable price variation:
//!
//! * a structural network that predicts the parameters `(alpha, beta)` of a
//!   linear demand head from item and environment features ([`ml`]), and
//! * a spatial-competition log-log regression estimated product by product
//!   with OLS ([`econometric`]).
//!
//! Estimated demand functions feed a margin-constrained revenue optimizer
//! ([`optimizer`]). [`harness`] runs the comparison experiments.

pub mod config;
pub mod econometric;
pub mod error;
pub mod features;
pub mod harness;
pub mod market;
pub mod ml;
pub mod nn;
pub mod optimizer;

pub use error::{Error, Result};
