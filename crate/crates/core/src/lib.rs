//! Numerical laboratory for stochastic-variational quantization.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod action;
pub mod entropy;
pub mod error;
pub mod experiment;
pub mod noether;
pub mod numerics;
pub mod fieldlattice;
pub mod madelung;
pub mod schrodinger;
pub mod stochastic;

pub use error::{Error, Result};
