//! Numerical laboratory for the steady three-dimensional Prandtl boundary-layer
//! equations with outer flow (U, V) = (1, 1).
//!
//! The crate builds a Blasius background, synthesizes compatible boundary data
//! along characteristics, marches the lagged-coefficient scheme in x with an
//! outer Picard loop, and checks barrier inequalities, maximum principles and
//! the weighted bound ledger on the discrete fields.

// `!(x > 0.0)` is used on purpose so that NaN takes the rejecting branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod background;
pub mod banded;
pub mod barrier;
pub mod blasius;
pub mod boundary;
pub mod config;
pub mod error;
pub mod grid;
pub mod ledger;
pub mod plot;
pub mod report;
pub mod snapshot;
pub mod solver;
pub mod suites;
pub mod vector_calculus;

pub use error::{Error, Location, Result};
