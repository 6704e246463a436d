// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod chains;
pub mod cli;
pub mod error;
pub mod inhom;
pub mod mccgem;
pub mod moments;
pub mod numeric;
pub mod rng;
pub mod stats;
pub mod stickcore;

pub use error::{Error, Result};
