//! Dynamic MRI reconstruction with joint transformed-tensor low-rank and
//! sparse priors.

pub mod acquisition;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod metrics;
pub mod phantom;
pub mod prox;
pub mod solvers;
pub mod tensor;
pub mod tuner;

pub use error::{Error, Result};
pub use tensor::{DynamicImage, TransformKind, TransformSpec};
