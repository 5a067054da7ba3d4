use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::sampling::ForwardPolicy;

/// Behavior policy used to sample training trajectories: `P_F` tempered by
/// `temperature`, mixed with a uniform draw over valid actions with
/// probability `epsilon`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplorationPolicy {
    pub epsilon: f64,
    pub temperature: f64,
}

impl Default for ExplorationPolicy {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            temperature: 1.0,
        }
    }
}

impl ExplorationPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(format!("epsilon must lie in [0, 1], got {}", self.epsilon));
        }
        if !(self.temperature > 0.0) {
            return Err(format!("temperature must be positive, got {}", self.temperature));
        }
        Ok(())
    }

    /// Transforms policy log-probabilities (`-inf` on masked actions).
    pub fn mix(&self, log_probs: &[f64]) -> Vec<f64> {
        let valid = log_probs.iter().filter(|x| x.is_finite()).count();
        if valid == 0 {
            return log_probs.to_vec();
        }
        let max = log_probs
            .iter()
            .copied()
            .filter(|x| x.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        let tempered: Vec<f64> = log_probs
            .iter()
            .map(|&x| {
                if x.is_finite() {
                    ((x - max) / self.temperature).exp()
                } else {
                    0.0
                }
            })
            .collect();
        let total: f64 = tempered.iter().sum();
        let uniform = 1.0 / valid as f64;
        log_probs
            .iter()
            .zip(&tempered)
            .map(|(&x, &t)| {
                if x.is_finite() {
                    ((1.0 - self.epsilon) * t / total + self.epsilon * uniform).ln()
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect()
    }

    pub fn wrap<P>(self, inner: P) -> Explored<P> {
        Explored {
            inner,
            explore: self,
        }
    }
}

pub struct Explored<P> {
    pub inner: P,
    pub explore: ExplorationPolicy,
}

impl<E: Environment, P: ForwardPolicy<E>> ForwardPolicy<E> for Explored<P> {
    fn action_log_probs(&self, env: &E, states: &[&E::State]) -> Vec<Vec<f64>> {
        self.inner
            .action_log_probs(env, states)
            .iter()
            .map(|lp| self.explore.mix(lp))
            .collect()
    }
}
