pub mod cli;
pub mod dataset;
pub mod distill;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod nets;
pub mod tensor;

pub use error::{Error, Result};
