//! GFlowNet training with exact oracles, plus Bayesian structure learning,
//! active learning and information-gain experimental design built on it.

pub mod active;
pub mod causal;
pub mod design;
pub mod env;
pub mod envs;
pub mod experiment;
pub mod gfn;
pub mod io;
pub mod math;
pub mod nn;
pub mod oracle;
pub mod sampling;

pub use env::{ActionId, EnvError, Environment, StateKey, Trajectory};
