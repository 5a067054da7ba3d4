//! Active learning: ensemble surrogates, acquisition functions and the
//! sequential acquisition loop, either by argmax over a candidate pool or by
//! sampling a GFlowNet trained on the acquisition.

mod acquisition;
mod surrogate;

pub use acquisition::{expected_improvement, Acquisition};
pub use surrogate::{fit_surrogate, fit_surrogate_seeded, Surrogate, SurrogateConfig};

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::RwLock;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{ActionId, EnvError, Environment, StateKey};
use crate::gfn::{train, GfnModel, ModelConfig, TrainConfig, TrainError};
use crate::nn::NnError;
use crate::sampling::sample_trajectories;

#[derive(Debug, Error)]
pub enum ActiveError {
    #[error("surrogate needs at least 2 labelled points, got {0}")]
    InsufficientData(usize),
    #[error("oracle budget of {0} evaluations exhausted")]
    OraclesExhausted(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AcquisitionMode {
    /// Top-B pool candidates by acquisition value.
    Argmax,
    /// B draws from a GFlowNet trained with the acquisition as reward.
    GfnAl,
    /// B uniform draws from the pool.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopConfig {
    pub mode: AcquisitionMode,
    pub rounds: usize,
    pub batch_size: usize,
    pub acquisition: Acquisition,
    pub surrogate: SurrogateConfig,
    /// GFlowNet reward is `max(acquisition, reward_floor)^reward_power`.
    pub reward_power: f64,
    pub reward_floor: f64,
    pub model: ModelConfig,
    pub gfn: TrainConfig,
    /// Start each round from the previous round's GFlowNet parameters.
    pub warm_start: bool,
    /// Extra draws allowed per round when looking for unseen candidates.
    pub resample_factor: usize,
    /// Maximum oracle evaluations over the whole loop, if bounded.
    pub oracle_budget: Option<usize>,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            mode: AcquisitionMode::GfnAl,
            rounds: 10,
            batch_size: 16,
            acquisition: Acquisition::default(),
            surrogate: SurrogateConfig::default(),
            reward_power: 1.0,
            reward_floor: 1e-3,
            model: ModelConfig::default(),
            gfn: TrainConfig {
                steps: 5000,
                eval_every: 5000,
                ..TrainConfig::default()
            },
            warm_start: true,
            resample_factor: 8,
            oracle_budget: None,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), ActiveError> {
        if self.batch_size == 0 {
            return Err(ActiveError::Config("batch_size must be positive".into()));
        }
        if !(self.reward_floor > 0.0) || !(self.reward_power > 0.0) {
            return Err(ActiveError::Config("reward_floor and reward_power must be positive".into()));
        }
        if let Acquisition::Ucb { beta } = self.acquisition {
            if !beta.is_finite() || beta < 0.0 {
                return Err(ActiveError::Config("ucb beta must be non-negative".into()));
            }
        }
        self.gfn.validate()?;
        Ok(())
    }
}

/// One acquisition round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub acquired: Vec<String>,
    pub values: Vec<f64>,
    pub dataset_max: f64,
    pub modes_found: usize,
    pub dataset_size: usize,
}

/// Number of distinct modes hit by `candidates`.
pub fn mode_census<E: Environment>(env: &E, candidates: &[E::State]) -> usize {
    candidates.iter().filter_map(|s| env.mode_of(s)).collect::<BTreeSet<_>>().len()
}

/// Environment whose reward is the acquisition of a surrogate.
pub struct AcquisitionEnv<'a, E: Environment> {
    inner: &'a E,
    surrogate: &'a Surrogate,
    acquisition: Acquisition,
    power: f64,
    floor: f64,
    cache: RwLock<HashMap<StateKey, f64>>,
}

impl<'a, E: Environment> AcquisitionEnv<'a, E> {
    pub fn new(inner: &'a E, surrogate: &'a Surrogate, acquisition: Acquisition, power: f64, floor: f64) -> Self {
        Self {
            inner,
            surrogate,
            acquisition,
            power,
            floor,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn acquisition_value(&self, s: &E::State) -> f64 {
        let (m, sd) = self.surrogate.predict_one(&self.inner.features(s));
        self.acquisition.value(m, sd)
    }
}

impl<E: Environment> Environment for AcquisitionEnv<'_, E> {
    type State = E::State;

    fn initial_state(&self) -> Self::State {
        self.inner.initial_state()
    }
    fn action_count(&self) -> usize {
        self.inner.action_count()
    }
    fn stop_action(&self) -> ActionId {
        self.inner.stop_action()
    }
    fn action_mask(&self, s: &Self::State) -> Vec<bool> {
        self.inner.action_mask(s)
    }
    fn apply(&self, s: &Self::State, a: ActionId) -> Result<Self::State, EnvError> {
        self.inner.apply(s, a)
    }
    fn parents(&self, s: &Self::State) -> Vec<(Self::State, ActionId)> {
        self.inner.parents(s)
    }
    fn backward_mask(&self, s: &Self::State) -> Vec<bool> {
        self.inner.backward_mask(s)
    }
    fn feature_dim(&self) -> usize {
        self.inner.feature_dim()
    }
    fn write_features(&self, s: &Self::State, out: &mut [f64]) {
        self.inner.write_features(s, out)
    }
    fn log_reward(&self, s: &Self::State) -> f64 {
        let key = self.inner.key(s);
        if let Some(&v) = self.cache.read().expect("cache lock").get(&key) {
            return v;
        }
        let v = self.power * self.acquisition_value(s).max(self.floor).ln();
        self.cache.write().expect("cache lock").insert(key, v);
        v
    }
    fn is_terminal_allowed(&self, s: &Self::State) -> bool {
        self.inner.is_terminal_allowed(s)
    }
    fn key(&self, s: &Self::State) -> StateKey {
        self.inner.key(s)
    }
    fn mode_of(&self, s: &Self::State) -> Option<usize> {
        self.inner.mode_of(s)
    }
    fn mode_count(&self) -> usize {
        self.inner.mode_count()
    }
}

/// Labelled data accumulated by the loop.
#[derive(Clone, Debug)]
pub struct Dataset<S> {
    pub points: Vec<S>,
    pub values: Vec<f64>,
}

impl<S> Dataset<S> {
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub struct BoOutcome<S> {
    pub logs: Vec<RoundLog>,
    pub data: Dataset<S>,
    /// Final GFlowNet, in GFlowNet mode.
    pub model: Option<GfnModel>,
}

/// Runs `config.rounds` acquisition rounds starting from `initial`.
///
/// `pool` lists the candidates for argmax and random modes; it is ignored
/// by the GFlowNet mode, which generates candidates from the environment.
pub fn run_bo<E, F, R>(
    env: &E,
    oracle: F,
    initial: Dataset<E::State>,
    pool: Option<&[E::State]>,
    config: &LoopConfig,
    rng: &mut R,
) -> Result<BoOutcome<E::State>, ActiveError>
where
    E: Environment,
    F: Fn(&E::State) -> f64,
    R: Rng + ?Sized,
{
    config.validate()?;
    let mut data = initial;
    let mut seen: HashSet<StateKey> = data.points.iter().map(|s| env.key(s)).collect();
    let mut logs = Vec::with_capacity(config.rounds);
    let mut spent = 0usize;
    let mut model: Option<GfnModel> = None;
    let mut gfn_cfg = config.gfn.clone();
    if gfn_cfg.max_len.is_none() && config.mode == AcquisitionMode::GfnAl && config.rounds > 0 {
        gfn_cfg.max_len = Some(crate::oracle::default_max_len(env, 200_000));
    }
    let pool = match (config.mode, pool) {
        (AcquisitionMode::GfnAl, _) => None,
        (_, Some(p)) if !p.is_empty() => Some(p),
        _ => return Err(ActiveError::Config("argmax and random modes need a candidate pool".into())),
    };

    for round in 0..config.rounds {
        let batch: Vec<E::State> = match config.mode {
            AcquisitionMode::Random => {
                let fresh: Vec<&E::State> = pool.unwrap().iter().filter(|s| !seen.contains(&env.key(s))).collect();
                fresh
                    .choose_multiple(rng, config.batch_size)
                    .map(|s| (*s).clone())
                    .collect()
            }
            AcquisitionMode::Argmax => {
                let surrogate = fit_on(env, &data, &config.surrogate, rng)?;
                let acq = config.acquisition.with_incumbent(data.max());
                let fresh: Vec<&E::State> = pool.unwrap().iter().filter(|s| !seen.contains(&env.key(s))).collect();
                let preds = surrogate.predict(&feature_matrix(env, fresh.iter().copied()));
                let mut scored: Vec<(f64, usize)> =
                    preds.iter().enumerate().map(|(i, &(m, sd))| (acq.value(m, sd), i)).collect();
                // Stable order on ties keeps runs reproducible.
                scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                scored.iter().take(config.batch_size).map(|&(_, i)| fresh[i].clone()).collect()
            }
            AcquisitionMode::GfnAl => {
                let surrogate = fit_on(env, &data, &config.surrogate, rng)?;
                let acq = config.acquisition.with_incumbent(data.max());
                let reward_env = AcquisitionEnv::new(env, &surrogate, acq, config.reward_power, config.reward_floor);
                let m = match (model.take(), config.warm_start) {
                    (Some(m), true) => m,
                    _ => GfnModel::for_env(env, &config.model, rng),
                };
                let mut m = m;
                train(&reward_env, &mut m, &gfn_cfg, None, rng)?;
                let max_len = gfn_cfg.max_len.expect("set above");
                let mut batch = Vec::with_capacity(config.batch_size);
                let mut batch_keys = HashSet::new();
                let draws = config.batch_size * config.resample_factor.max(1);
                let trajs = sample_trajectories(env, &m, draws, max_len, rng)?;
                for t in &trajs {
                    if batch.len() == config.batch_size {
                        break;
                    }
                    let key = env.key(t.terminal());
                    if !seen.contains(&key) && batch_keys.insert(key) {
                        batch.push(t.terminal().clone());
                    }
                }
                model = Some(m);
                batch
            }
        };
        if let Some(budget) = config.oracle_budget {
            if spent + batch.len() > budget {
                return Err(ActiveError::OraclesExhausted(budget));
            }
        }
        spent += batch.len();
        let values: Vec<f64> = batch.iter().map(&oracle).collect();
        for s in &batch {
            seen.insert(env.key(s));
        }
        let acquired = batch.iter().map(|s| env.key(s).to_string()).collect();
        data.points.extend(batch);
        data.values.extend(values.iter().copied());
        logs.push(RoundLog {
            round,
            acquired,
            values,
            dataset_max: data.max(),
            modes_found: mode_census(env, &data.points),
            dataset_size: data.points.len(),
        });
    }
    Ok(BoOutcome { logs, data, model })
}

fn feature_matrix<'s, E: Environment + 's>(env: &E, states: impl Iterator<Item = &'s E::State>) -> Array2<f64> {
    let rows: Vec<Vec<f64>> = states.map(|s| env.features(s)).collect();
    let dim = env.feature_dim();
    Array2::from_shape_fn((rows.len(), dim), |(i, j)| rows[i][j])
}

fn fit_on<E: Environment, R: Rng + ?Sized>(
    env: &E,
    data: &Dataset<E::State>,
    config: &SurrogateConfig,
    rng: &mut R,
) -> Result<Surrogate, ActiveError> {
    fit_surrogate(&feature_matrix(env, data.points.iter()), &data.values, config, rng)
}
