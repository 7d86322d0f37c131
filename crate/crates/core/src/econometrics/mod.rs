//! Least squares, information criteria, step selection and result tables.

mod model;
mod ols;
mod table;

pub use model::*;
pub use ols::*;
pub use table::*;
