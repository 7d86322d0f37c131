//! Niche measurement from app descriptions and the downstream panel
//! regressions and equilibrium checks.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cluster;
pub mod corpus;
pub mod econometrics;
pub mod equilibrium;
mod error;
pub mod linalg;
pub mod pipeline;
pub mod reduce;
pub mod synthetic;
pub mod textprep;
pub mod vectorize;

pub use error::{ExitClass, NicheError, Result};
