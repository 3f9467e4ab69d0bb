//! Split-strategy selection and surrogate-gradient placement of DNN
//! fragments on heterogeneous edge workers, with the interval simulator
//! and experiment harness used to evaluate them.

pub mod domain;
pub mod error;
pub mod harness;
pub mod mab;
pub mod metrics;
pub mod placement;
pub mod sim;
pub mod workload;

pub use domain::*;
pub use error::{Error, Result};
