//! GFlowNet parameterization, training objectives and the training loop.

mod amortize;
mod explore;
mod losses;
mod model;
mod train;

pub use amortize::{direct_amortization_loss, stochastic_log_reward, AmortizationCriterion};
pub use explore::{ExplorationPolicy, Explored};
pub use losses::{
    db_loss, db_residual, objective_gradient_error, objective_loss, objective_loss_and_grad, tb_loss, tb_residual,
    terminating_db_loss, terminating_db_residual, Objective,
};
pub use model::{GfnModel, ModelConfig, StateOutputs};
pub use train::{oracle_metrics, train, LrSchedule, MetricsRecord, TrainConfig};

use thiserror::Error;

use crate::env::EnvError;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("non-finite log-reward {0}")]
    NonFiniteLogReward(f64),
    #[error("non-finite loss at step {step}; parameters restored to the last good step")]
    NonFiniteLoss {
        step: usize,
        records: Vec<MetricsRecord>,
    },
    #[error("empty minibatch")]
    EmptyMinibatch,
    #[error("invalid configuration: {0}")]
    Config(String),
}
