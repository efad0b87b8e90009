//! Frequency-domain dataset distillation.
//!
//! Compresses a labeled image dataset into a small synthetic set
//! parameterized by masked frequency coefficients, optimizes those
//! coefficients against a distribution-matching objective, and evaluates
//! the decoded set by training classifiers on it.

pub mod data;
pub mod distill;
pub mod error;
pub mod frequency;
pub mod mask;
pub mod memory;
pub mod net;
mod rng;
pub mod spectral;
pub mod tensor;

pub use error::{FredError, Result};
pub use frequency::TransformKind;
pub use mask::Mask;
pub use tensor::Tensor4;
