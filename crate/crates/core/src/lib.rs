pub mod checkpoint;
pub mod dataset;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod moe;
pub mod nn;
pub mod pipeline;
pub mod prior;

pub use error::{Error, Result};
