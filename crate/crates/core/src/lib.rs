// Negated float comparisons below are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod chisq;
pub mod dac;
pub mod datagen;
pub mod el;
pub mod error;
pub mod harness;
pub mod ingest;
pub mod model;
pub mod rng;

pub use error::{Error, Result};
