//! Numerical laboratory for the q-logarithm loss family and its sampled
//! gradient estimators on enumerable latent-variable models.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod cli;
pub mod csvio;
pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod lab;
pub mod models;
pub mod numeric;
pub mod oracle;
pub mod qcore;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
pub use qcore::{QParam, SimplexPoint, SuccessProb};
