//! The trajectory-DAG abstraction.
//!
//! An [`Environment`] describes a finite directed acyclic graph of partially
//! constructed objects. Every state exposes a masked action vocabulary whose
//! last index is the stop action; taking stop from a state where
//! [`Environment::is_terminal_allowed`] holds emits that state as a finished
//! object with reward `exp(log_reward(state))`.

use std::fmt::{self, Debug};
use std::hash::Hash;

use thiserror::Error;

/// Index into an environment's action vocabulary.
pub type ActionId = usize;

/// Canonical byte encoding of a state. Two states are equal iff their keys
/// are byte-identical.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateKey(pub Vec<u8>);

impl Debug for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StateKey(")?;
        for b in &self.0 {
            write!(f, "{b:02x}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("state enumeration exceeded the cap of {cap} states")]
    CapExceeded { cap: usize },
    #[error("cycle detected: state {0} is its own ancestor")]
    CycleDetected(StateKey),
    #[error("trajectory exceeded max length {0} without stopping")]
    MaxLenExceeded(usize),
    #[error("policy probabilities are not finite at state {0}")]
    NonFinitePolicy(StateKey),
    #[error("action {action} is masked at state {state}")]
    MaskedTransition { state: StateKey, action: ActionId },
}

/// Behavioral contract for a constructive environment.
///
/// Implementations must keep `apply` deterministic, make `parents` the exact
/// inverse of `apply`, and give each parent of a state a distinct action
/// index (the action taken from that parent).
pub trait Environment: Send + Sync {
    type State: Clone + Eq + Hash + Debug + Send + Sync;

    fn initial_state(&self) -> Self::State;

    /// Size of the action vocabulary, stop included.
    fn action_count(&self) -> usize;

    fn stop_action(&self) -> ActionId {
        self.action_count() - 1
    }

    /// Forward-valid actions at `s`, stop included as the last entry.
    fn action_mask(&self, s: &Self::State) -> Vec<bool>;

    /// Applies a non-stop action.
    fn apply(&self, s: &Self::State, a: ActionId) -> Result<Self::State, EnvError>;

    fn parents(&self, s: &Self::State) -> Vec<(Self::State, ActionId)>;

    fn feature_dim(&self) -> usize;

    /// Writes the fixed-width policy input for `s` into `out`.
    fn write_features(&self, s: &Self::State, out: &mut [f64]);

    fn features(&self, s: &Self::State) -> Vec<f64> {
        let mut v = vec![0.0; self.feature_dim()];
        self.write_features(s, &mut v);
        v
    }

    fn log_reward(&self, s: &Self::State) -> f64;

    fn is_terminal_allowed(&self, s: &Self::State) -> bool;

    fn key(&self, s: &Self::State) -> StateKey;

    /// Mode membership for environments with a known mode map.
    fn mode_of(&self, _s: &Self::State) -> Option<usize> {
        None
    }

    fn mode_count(&self) -> usize {
        0
    }

    /// Mask over actions leading into `s` from its parents.
    fn backward_mask(&self, s: &Self::State) -> Vec<bool> {
        let mut mask = vec![false; self.action_count()];
        for (_, a) in self.parents(s) {
            mask[a] = true;
        }
        mask
    }
}

/// A complete trajectory: `actions[i]` is taken at `states[i]`, and the last
/// action is stop, taken at the terminal state `states.last()`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<S> {
    pub states: Vec<S>,
    pub actions: Vec<ActionId>,
    pub log_reward: f64,
}

impl<S: Clone + Eq + Hash + Debug> Trajectory<S> {
    pub fn terminal(&self) -> &S {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Non-stop transitions as `(state, action, next_state)`.
    pub fn transitions(&self) -> impl Iterator<Item = (&S, ActionId, &S)> {
        self.states
            .windows(2)
            .zip(&self.actions)
            .map(|(w, &a)| (&w[0], a, &w[1]))
    }

    /// Checks the structural invariants against `env`.
    pub fn validate<E: Environment<State = S>>(&self, env: &E) -> Result<(), String> {
        if self.states.is_empty() || self.states.len() != self.actions.len() {
            return Err("states and actions must be non-empty and equally long".into());
        }
        if self.states[0] != env.initial_state() {
            return Err("trajectory does not start at the initial state".into());
        }
        let stop = env.stop_action();
        let mut seen = std::collections::HashSet::new();
        for (i, (s, &a)) in self.states.iter().zip(&self.actions).enumerate() {
            if !seen.insert(env.key(s)) {
                return Err(format!("state repeats at step {i}"));
            }
            if !env.action_mask(s)[a] {
                return Err(format!("masked action {a} at step {i}"));
            }
            let last = i + 1 == self.states.len();
            if last != (a == stop) {
                return Err(format!("stop placement invalid at step {i}"));
            }
            if !last {
                let next = env.apply(s, a).map_err(|e| e.to_string())?;
                if next != self.states[i + 1] {
                    return Err(format!("transition mismatch at step {i}"));
                }
            }
        }
        Ok(())
    }
}
