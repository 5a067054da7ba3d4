//! Single-step amortization criteria and the stochastic Bayesian
//! log-reward.

use serde::{Deserialize, Serialize};

use super::TrainError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmortizationCriterion {
    /// `(π̂(y|x) Ŝ(x) − R(x, y))²`
    Constraint,
    /// `(log π̂(y|x) + log Ŝ(x) − log R(x, y))²`
    LogConstraint,
    /// `(Ŝ(x) − R(x, y))²` for `y ~ p(y|x)`; minimized by `E[R | x]`.
    SumMse,
}

/// Loss for one sample `(x, y, R)`, given the model's `π̂(y|x)` and `Ŝ(x)`.
/// `pi_hat` is ignored by [`AmortizationCriterion::SumMse`].
pub fn direct_amortization_loss(
    criterion: AmortizationCriterion,
    pi_hat: f64,
    s_hat: f64,
    reward: f64,
) -> Result<f64, TrainError> {
    if !pi_hat.is_finite() || !s_hat.is_finite() || !reward.is_finite() {
        return Err(TrainError::Config("non-finite amortization input".into()));
    }
    let loss = match criterion {
        AmortizationCriterion::Constraint => (pi_hat * s_hat - reward).powi(2),
        AmortizationCriterion::LogConstraint => (pi_hat.ln() + s_hat.ln() - reward.ln()).powi(2),
        AmortizationCriterion::SumMse => (s_hat - reward).powi(2),
    };
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(TrainError::Config("log-constraint needs positive inputs".into()))
    }
}

/// Unbiased minibatch estimate of `log P(θ) + Σ_{z ∈ D} log P(z | θ)`:
/// `log P(θ) + |D| · mean_{z ∈ batch} log P(z | θ)`, where
/// `minibatch_log_lik` is the summed log-likelihood over the minibatch.
pub fn stochastic_log_reward(
    prior_log_prob: f64,
    minibatch_log_lik: f64,
    dataset_size: usize,
    minibatch_size: usize,
) -> Result<f64, TrainError> {
    if minibatch_size == 0 {
        return Err(TrainError::EmptyMinibatch);
    }
    Ok(prior_log_prob + dataset_size as f64 * (minibatch_log_lik / minibatch_size as f64))
}
