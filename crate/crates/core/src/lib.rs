#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod numerics;
pub mod placement;
pub mod coefficients;
pub mod delay;
pub mod bubble_solver;
pub mod effective;
pub mod config;
pub mod harness;
pub mod incident;

pub use error::{Error, Result};
