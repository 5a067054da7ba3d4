use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::math::l1_distance;
use crate::nn::Optimizer;
use crate::oracle::{exact_log_partition, exact_terminal_distribution, target_distribution, StateGraph};
use crate::sampling::sample_trajectories;

use super::explore::ExplorationPolicy;
use super::losses::{objective_loss_and_grad, Objective};
use super::model::GfnModel;
use super::TrainError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum LrSchedule {
    Constant,
    /// Geometric decay reaching `lr · final_fraction` at the last step.
    Exponential { final_fraction: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub objective: Objective,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Learning-rate multiplier for `log Z`.
    pub log_z_lr_scale: f64,
    pub optimizer: Optimizer,
    pub schedule: LrSchedule,
    pub explore: ExplorationPolicy,
    pub eval_every: usize,
    /// Trajectory length guard; defaults to twice the longest path when the
    /// environment is enumerable, else 128.
    pub max_len: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Tb,
            steps: 20_000,
            batch_size: 16,
            lr: 1e-3,
            log_z_lr_scale: 100.0,
            optimizer: Optimizer::adam(),
            schedule: LrSchedule::Constant,
            explore: ExplorationPolicy::default(),
            eval_every: 1000,
            max_len: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.explore.validate().map_err(TrainError::Config)?;
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be positive".into()));
        }
        if self.eval_every == 0 {
            return Err(TrainError::Config("eval_every must be positive".into()));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(TrainError::Config("lr must be finite and non-negative".into()));
        }
        Ok(())
    }

    fn lr_at(&self, step: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.lr,
            LrSchedule::Exponential { final_fraction } => {
                let t = if self.steps == 0 { 0.0 } else { step as f64 / self.steps as f64 };
                self.lr * final_fraction.powf(t)
            }
        }
    }
}

/// One evaluation point. `step` is the number of updates applied so far and
/// `loss` the mean objective on the batch sampled at that point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub loss: f64,
    pub l1_to_target: Option<f64>,
    pub logz_abs_err: Option<f64>,
    pub modes_found: Option<usize>,
}

/// Exact evaluation of a model against the enumerated target.
pub fn oracle_metrics<E: Environment>(
    env: &E,
    model: &GfnModel,
    graph: &StateGraph<E::State>,
    objective: Objective,
) -> (f64, Option<f64>) {
    let learned = exact_terminal_distribution(env, graph, model);
    let target = target_distribution(env, graph);
    let l1 = l1_distance(&learned.probs, &target);
    let log_z = exact_log_partition(env, graph);
    let err = match objective {
        Objective::Tb => Some((model.log_z() - log_z).abs()),
        Objective::Db => {
            let s0 = env.initial_state();
            let out = model.state_outputs(env, &[&s0]);
            Some((out[0].log_flow - log_z).abs())
        }
        Objective::TerminatingDb => None,
    };
    (l1, err)
}

/// Trains `model` by sampling trajectories from the exploration policy and
/// descending the chosen objective.
///
/// When `oracle` is given, each evaluation records the exact L1 distance
/// between the learned terminal distribution and `R/Z`.
pub fn train<E: Environment, R: Rng + ?Sized>(
    env: &E,
    model: &mut GfnModel,
    cfg: &TrainConfig,
    oracle: Option<&StateGraph<E::State>>,
    rng: &mut R,
) -> Result<Vec<MetricsRecord>, TrainError> {
    cfg.validate()?;
    let max_len = match (cfg.max_len, oracle) {
        (Some(m), _) => m,
        (None, Some(g)) => 2 * g.longest_path(),
        (None, None) => crate::oracle::default_max_len(env, 100_000),
    };
    let log_z_id = model.log_z_id();
    model.store.set_lr_scale(log_z_id, cfg.log_z_lr_scale);
    let track_modes = env.mode_count() > 0;
    let mut modes = BTreeSet::new();
    let mut records = Vec::new();
    let mut last_good = model.store.clone();

    for k in 0..=cfg.steps {
        let trajs = {
            let behavior = cfg.explore.wrap(&*model);
            match sample_trajectories(env, &behavior, cfg.batch_size, max_len, rng) {
                Ok(t) => t,
                Err(crate::env::EnvError::NonFinitePolicy(_)) if k > 0 => {
                    model.store.copy_from(&last_good);
                    model.store.zero_grad();
                    return Err(TrainError::NonFiniteLoss { step: k, records });
                }
                Err(e) => return Err(e.into()),
            }
        };
        for tau in &trajs {
            if !tau.log_reward.is_finite() {
                return Err(TrainError::NonFiniteLogReward(tau.log_reward));
            }
            if track_modes {
                if let Some(m) = env.mode_of(tau.terminal()) {
                    modes.insert(m);
                }
            }
        }
        let loss = if k < cfg.steps {
            objective_loss_and_grad(model, env, &trajs, cfg.objective)?
        } else {
            super::losses::objective_loss(model, env, &trajs, cfg.objective)?
        };
        if !loss.is_finite() {
            model.store.copy_from(&last_good);
            model.store.zero_grad();
            return Err(TrainError::NonFiniteLoss { step: k, records });
        }
        if k % cfg.eval_every == 0 || k == cfg.steps {
            let (l1, err) = match oracle {
                Some(g) => {
                    let (l1, err) = oracle_metrics(env, model, g, cfg.objective);
                    (Some(l1), err)
                }
                None => (None, None),
            };
            records.push(MetricsRecord {
                step: k,
                loss,
                l1_to_target: l1,
                logz_abs_err: err,
                modes_found: track_modes.then_some(modes.len()),
            });
        }
        if k < cfg.steps {
            last_good.copy_from(&model.store);
            if let Err(e) = model.store.step(cfg.lr_at(k), cfg.optimizer) {
                model.store.zero_grad();
                return match e {
                    crate::nn::NnError::NonFiniteGradient(_) => Err(TrainError::NonFiniteLoss { step: k, records }),
                    other => Err(other.into()),
                };
            }
            if model.store.values_iter().any(|v| !v.is_finite()) {
                model.store.copy_from(&last_good);
                return Err(TrainError::NonFiniteLoss { step: k, records });
            }
        }
    }
    Ok(records)
}
