//! Batch front-end for EMD-regression: CSV series in, result bundles of CSV
//! tables out.

pub mod bundle;
pub mod commands;
pub mod dataset;
pub mod error;

pub use error::{CliError, Result};
