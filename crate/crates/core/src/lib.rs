// Negated float comparisons are deliberate: NaN must land in the error branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod network;
pub mod quantizer;
pub mod randmat;
pub mod rates;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
