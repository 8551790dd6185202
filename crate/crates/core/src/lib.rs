//! Orthogonal activation with implicit group-aware bias (OGAB), the
//! numeric machinery to train it, and an experiment harness for
//! class-imbalanced tabular classification.

pub mod activation;
pub mod data;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Matrix, Tape, Var};
