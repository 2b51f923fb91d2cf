//! Discrete-event simulation of federated learning over LEO satellite constellations.

// NaN must fail validation, so negated comparisons are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contact;
pub mod data;
pub mod error;
pub mod experiment;
pub mod fl;
pub mod orbital;
pub mod sim;
pub mod strategy;

pub use error::{Error, Result};
