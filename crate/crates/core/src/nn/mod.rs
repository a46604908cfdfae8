//! Numerical substrate: dense matrices, a small MLP with explicit
//! backward pass, Adam, seeded randomness and a gradient checker.

pub mod adam;
pub mod gradcheck;
pub mod matrix;
pub mod mlp;
pub mod rng;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use matrix::{cosine, dot, norm, DenseMatrix, EmbeddingTable};
pub use mlp::{sigmoid, Activation, Layer, MlpGrads, MlpParams, Tape};
pub use rng::Rng;
