//! Tasks, verifiers, curricula and metrics for length-extrapolation experiments.

pub mod curriculum;
pub mod error;
pub mod metrics;
pub mod predictor;
pub mod seeds;
pub mod tasks;
pub mod verify;

pub use error::{CoreError, Result};
