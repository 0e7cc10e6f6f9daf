//! Desk-scale federated learning lab for studying gradient leakage and the
//! Adam-moment gradient stand-in defense.

pub mod attacks;
pub mod defense;
pub mod error;
pub mod fedsim;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod tensor;

pub use error::{Error, Result};
pub use nn::{GradientSet, MlpSpec, Params, Sample};
pub use tensor::Tensor;
