//! Group-Lasso regularized training of sigmoid MLPs, followed by structural
//! removal of the hidden nodes the penalty switched off.

pub mod analysis;
pub mod config;
pub mod datasets;
pub mod error;
pub mod experiment;
pub mod format;
pub mod math;
pub mod network;
pub mod pruning;
pub mod regularization;
pub mod trainer;

pub use error::{Error, Result};
