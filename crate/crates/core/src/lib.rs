//! EMD-regression.
//!
//! Time series are split into intrinsic mode functions by noise-assisted
//! multivariate empirical mode decomposition ([`memd`]), and sparse linear
//! models ([`lasso`]) relate a response to the predictor modes under two
//! designs ([`emdr`]).
//!
//! - [`signal`]: series type, extrema, spline envelopes
//! - [`emd`]: univariate sifting and per-IMF statistics
//! - [`memd`]: multivariate and noise-assisted decomposition
//! - [`lasso`]: coordinate descent, lambda paths, cross-validation
//! - [`emdr`]: the R1/R2 designs, sensitivities, block bootstrap
//! - [`config`]: run configuration

// `!(x > 0.0)` is used deliberately so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod emd;
pub mod emdr;
pub mod error;
pub mod lasso;
pub mod memd;
pub mod par;
pub mod signal;

pub use config::RunConfig;
pub use error::{Error, ErrorClass, Result};
