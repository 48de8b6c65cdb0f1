// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod cli;
pub mod epd;
pub mod error;
pub mod flight;
pub mod geometry;
pub mod montecarlo;
mod par;
pub mod quad;
pub mod sampling;
pub mod specfun;
pub mod stats;

pub use error::{Error, Result};
