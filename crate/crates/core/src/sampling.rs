//! Forward policies and trajectory sampling.

use rand::Rng;

use crate::env::{EnvError, Environment, Trajectory};
use crate::math::{masked_log_softmax, sample_categorical};

/// A per-state distribution over the action vocabulary.
pub trait ForwardPolicy<E: Environment> {
    /// Log-probabilities for each state; masked actions must be `-inf`.
    fn action_log_probs(&self, env: &E, states: &[&E::State]) -> Vec<Vec<f64>>;
}

/// Uniform over the currently valid actions (stop included).
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformPolicy;

impl<E: Environment> ForwardPolicy<E> for UniformPolicy {
    fn action_log_probs(&self, env: &E, states: &[&E::State]) -> Vec<Vec<f64>> {
        states
            .iter()
            .map(|s| {
                let mask = env.action_mask(s);
                masked_log_softmax(&vec![0.0; mask.len()], &mask)
            })
            .collect()
    }
}

/// Wraps a closure returning log-probabilities for one state.
pub struct FnPolicy<F>(pub F);

impl<E, F> ForwardPolicy<E> for FnPolicy<F>
where
    E: Environment,
    F: Fn(&E::State) -> Vec<f64>,
{
    fn action_log_probs(&self, _env: &E, states: &[&E::State]) -> Vec<Vec<f64>> {
        states.iter().map(|s| (self.0)(s)).collect()
    }
}

impl<E: Environment, P: ForwardPolicy<E> + ?Sized> ForwardPolicy<E> for &P {
    fn action_log_probs(&self, env: &E, states: &[&E::State]) -> Vec<Vec<f64>> {
        (**self).action_log_probs(env, states)
    }
}

/// Samples one trajectory from `policy`.
pub fn sample_trajectory<E, P, R>(
    env: &E,
    policy: &P,
    max_len: usize,
    rng: &mut R,
) -> Result<Trajectory<E::State>, EnvError>
where
    E: Environment,
    P: ForwardPolicy<E> + ?Sized,
    R: Rng + ?Sized,
{
    let mut out = sample_trajectories(env, policy, 1, max_len, rng)?;
    Ok(out.pop().expect("one trajectory requested"))
}

/// Samples `n` trajectories in lockstep so the policy sees one batch of
/// active states per construction step. `max_len` counts actions, stop
/// included.
pub fn sample_trajectories<E, P, R>(
    env: &E,
    policy: &P,
    n: usize,
    max_len: usize,
    rng: &mut R,
) -> Result<Vec<Trajectory<E::State>>, EnvError>
where
    E: Environment,
    P: ForwardPolicy<E> + ?Sized,
    R: Rng + ?Sized,
{
    let stop = env.stop_action();
    let s0 = env.initial_state();
    let mut trajs: Vec<Trajectory<E::State>> = (0..n)
        .map(|_| Trajectory {
            states: vec![s0.clone()],
            actions: Vec::new(),
            log_reward: f64::NAN,
        })
        .collect();
    let mut active: Vec<usize> = (0..n).collect();
    let mut len = 0;
    while !active.is_empty() {
        if len >= max_len {
            return Err(EnvError::MaxLenExceeded(max_len));
        }
        let current: Vec<&E::State> = active
            .iter()
            .map(|&i| trajs[i].states.last().unwrap())
            .collect();
        let log_probs = policy.action_log_probs(env, &current);
        let mut chosen = Vec::with_capacity(active.len());
        for (lp, s) in log_probs.iter().zip(&current) {
            let weights: Vec<f64> = lp.iter().map(|x| x.exp()).collect();
            let total: f64 = weights.iter().sum();
            if !(total.is_finite() && total > 0.0) {
                return Err(EnvError::NonFinitePolicy(env.key(s)));
            }
            chosen.push(sample_categorical(&weights, rng));
        }
        let mut still_active = Vec::with_capacity(active.len());
        for (&i, a) in active.iter().zip(chosen) {
            let state = trajs[i].states.last().unwrap().clone();
            trajs[i].actions.push(a);
            if a == stop {
                trajs[i].log_reward = env.log_reward(&state);
            } else {
                let next = env.apply(&state, a)?;
                trajs[i].states.push(next);
                still_active.push(i);
            }
        }
        active = still_active;
        len += 1;
    }
    Ok(trajs)
}

/// Follows the highest-probability action from the initial state until stop,
/// taking the lowest action index on ties.
pub fn greedy_rollout<E, P>(env: &E, policy: &P, max_len: usize) -> Result<Trajectory<E::State>, EnvError>
where
    E: Environment,
    P: ForwardPolicy<E> + ?Sized,
{
    let stop = env.stop_action();
    let mut states = vec![env.initial_state()];
    let mut actions = Vec::new();
    loop {
        if actions.len() == max_len {
            return Err(EnvError::MaxLenExceeded(max_len));
        }
        let s = states.last().expect("non-empty");
        let lp = policy.action_log_probs(env, &[s]).pop().expect("one state");
        let mut best = 0;
        for (a, &v) in lp.iter().enumerate() {
            if v > lp[best] {
                best = a;
            }
        }
        actions.push(best);
        if best == stop {
            break;
        }
        let next = env.apply(s, best)?;
        states.push(next);
    }
    let log_reward = env.log_reward(states.last().expect("non-empty"));
    Ok(Trajectory { states, actions, log_reward })
}
