//! Bayesian causal structure learning over DAGs: marginal likelihoods,
//! exact posteriors for small graphs, edge marginals and interventional
//! predictive queries.

mod data;
mod posterior;
mod predictive;
mod score;

pub use data::{linear_gaussian_chain, DataMode, DataValues, ObsDataset};
pub use posterior::{edge_marginals, exact_posterior, posterior_entropy, EdgeMarginals, GraphPosterior, MAX_EXACT_DIM};
pub use predictive::{
    amortized_predictive_train, graph_predictive, posterior_predictive, AmortizedPredictiveConfig, AmortizedPredictor,
    Query,
};
pub use score::{graph_log_prior, BayesScorer, ScoreConfig};

use thiserror::Error;

use crate::env::EnvError;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum CausalError {
    #[error("malformed dataset: {0}")]
    Malformed(String),
    #[error("arity mismatch: {0}")]
    ArityMismatch(String),
    #[error("{d} variables exceeds the supported maximum of {max}")]
    DimensionTooLarge { d: usize, max: usize },
    #[error("evidence is not finite for every graph")]
    NonFiniteEvidence,
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
}
