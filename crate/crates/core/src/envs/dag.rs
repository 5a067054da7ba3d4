//! Directed acyclic graphs built one edge at a time.
//!
//! Edge `i → j` is action `i·d + j`; action `d²` is stop. An edge is valid
//! only if it is absent, not a self-loop, and `i` is not already reachable
//! from `j`, so every state is acyclic and every state is a valid terminal.

use std::sync::Arc;

use crate::env::{ActionId, EnvError, Environment, StateKey};

/// Adjacency and transitive closure as `d×d` bit matrices
/// (bit `i·d + j` set means `i → j`, respectively `j` reachable from `i`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DagState {
    pub adj: u64,
    pub closure: u64,
}

impl DagState {
    pub fn empty() -> Self {
        Self { adj: 0, closure: 0 }
    }

    /// Builds a state from an adjacency bitmask, or `None` if it is cyclic.
    pub fn from_adjacency(adj: u64, d: usize) -> Option<Self> {
        let closure = transitive_closure(adj, d);
        (0..d).all(|i| closure & bit(i, i, d) == 0).then_some(Self { adj, closure })
    }

    pub fn has_edge(&self, i: usize, j: usize, d: usize) -> bool {
        self.adj & bit(i, j, d) != 0
    }

    pub fn edge_count(&self) -> u32 {
        self.adj.count_ones()
    }

    pub fn parents_of(&self, node: usize, d: usize) -> Vec<usize> {
        (0..d).filter(|&i| self.has_edge(i, node, d)).collect()
    }

    pub fn edges(&self, d: usize) -> Vec<(usize, usize)> {
        (0..d * d)
            .filter(|&k| self.adj & (1 << k) != 0)
            .map(|k| (k / d, k % d))
            .collect()
    }
}

#[inline]
pub(crate) fn bit(i: usize, j: usize, d: usize) -> u64 {
    1u64 << (i * d + j)
}

pub fn transitive_closure(adj: u64, d: usize) -> u64 {
    let mut reach = adj;
    for k in 0..d {
        for i in 0..d {
            if reach & bit(i, k, d) != 0 {
                // i reaches k, so i reaches everything k reaches.
                let row_k = (reach >> (k * d)) & ((1u64 << d) - 1);
                reach |= row_k << (i * d);
            }
        }
    }
    reach
}

/// Log-score of a graph, used as the environment's log-reward.
pub trait GraphScorer: Send + Sync {
    fn log_score(&self, state: &DagState, d: usize) -> f64;
}

/// Every graph gets log-score zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformGraphScore;

impl GraphScorer for UniformGraphScore {
    fn log_score(&self, _state: &DagState, _d: usize) -> f64 {
        0.0
    }
}

impl<T: GraphScorer + ?Sized> GraphScorer for Arc<T> {
    fn log_score(&self, state: &DagState, d: usize) -> f64 {
        (**self).log_score(state, d)
    }
}

#[derive(Clone, Debug)]
pub struct DagEnv<S = UniformGraphScore> {
    d: usize,
    scorer: S,
}

impl DagEnv<UniformGraphScore> {
    pub fn uniform(d: usize) -> Self {
        Self::new(d, UniformGraphScore)
    }
}

impl<S: GraphScorer> DagEnv<S> {
    pub fn new(d: usize, scorer: S) -> Self {
        assert!((1..=8).contains(&d), "DAG env supports 1..=8 nodes");
        Self { d, scorer }
    }

    pub fn nodes(&self) -> usize {
        self.d
    }

    pub fn scorer(&self) -> &S {
        &self.scorer
    }

    /// Edge-slot mask plus stop.
    pub fn dag_action_mask(&self, s: &DagState) -> Vec<bool> {
        let d = self.d;
        let mut mask = Vec::with_capacity(d * d + 1);
        for i in 0..d {
            for j in 0..d {
                mask.push(i != j && s.adj & bit(i, j, d) == 0 && s.closure & bit(j, i, d) == 0);
            }
        }
        mask.push(true);
        mask
    }

    pub fn add_edge(&self, s: &DagState, i: usize, j: usize) -> DagState {
        let d = self.d;
        let mut closure = s.closure | bit(i, j, d);
        // Everything reaching i (and i itself) now reaches j and j's descendants.
        let row_j = ((s.closure >> (j * d)) & ((1u64 << d) - 1)) | (1 << j);
        for a in 0..d {
            if a == i || s.closure & bit(a, i, d) != 0 {
                closure |= row_j << (a * d);
            }
        }
        DagState {
            adj: s.adj | bit(i, j, d),
            closure,
        }
    }

    pub fn dag_parents(&self, s: &DagState) -> Vec<(DagState, ActionId)> {
        let d = self.d;
        (0..d * d)
            .filter(|&k| s.adj & (1 << k) != 0)
            .map(|k| {
                let adj = s.adj & !(1u64 << k);
                (
                    DagState {
                        adj,
                        closure: transitive_closure(adj, d),
                    },
                    k,
                )
            })
            .collect()
    }
}

impl<S: GraphScorer> Environment for DagEnv<S> {
    type State = DagState;

    fn initial_state(&self) -> DagState {
        DagState::empty()
    }

    fn action_count(&self) -> usize {
        self.d * self.d + 1
    }

    fn action_mask(&self, s: &DagState) -> Vec<bool> {
        self.dag_action_mask(s)
    }

    fn apply(&self, s: &DagState, a: ActionId) -> Result<DagState, EnvError> {
        let d = self.d;
        if a >= d * d || !self.dag_action_mask(s)[a] {
            return Err(EnvError::MaskedTransition {
                state: self.key(s),
                action: a,
            });
        }
        Ok(self.add_edge(s, a / d, a % d))
    }

    fn parents(&self, s: &DagState) -> Vec<(DagState, ActionId)> {
        self.dag_parents(s)
    }

    fn feature_dim(&self) -> usize {
        self.d * self.d
    }

    fn write_features(&self, s: &DagState, out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = if s.adj & (1 << k) != 0 { 1.0 } else { 0.0 };
        }
    }

    fn log_reward(&self, s: &DagState) -> f64 {
        self.scorer.log_score(s, self.d)
    }

    fn is_terminal_allowed(&self, _s: &DagState) -> bool {
        true
    }

    fn key(&self, s: &DagState) -> StateKey {
        StateKey(s.adj.to_le_bytes().to_vec())
    }
}
