//! Minimal reverse-mode differentiation for feed-forward networks.
//!
//! Parameters live in a [`ParamStore`] as named dense blocks with matching
//! gradient accumulators. An [`Mlp`] forward pass returns a [`Tape`] holding
//! the layer inputs it saw, and `Mlp::backward` replays that tape in reverse
//! to accumulate parameter gradients.

mod checkpoint;
mod gradcheck;
mod mlp;
mod optim;
mod params;
mod regress;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use gradcheck::gradient_check;
pub use mlp::{Activation, Mlp, Tape};
pub use optim::Optimizer;
pub use params::{ParamId, ParamStore};
pub use regress::Regressor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("tape was already consumed by a backward pass")]
    TapeReused,
    #[error("non-finite gradient in parameter block `{0}`")]
    NonFiniteGradient(String),
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
