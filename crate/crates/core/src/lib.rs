//! Speaker embedding toolkit.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod nn;
pub mod frontend;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor};
