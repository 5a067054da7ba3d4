//! Exact enumeration and dynamic-programming oracles for small environments.

use std::collections::{BTreeMap, HashMap};

use crate::env::{ActionId, EnvError, Environment, StateKey, Trajectory};
use crate::math::log_sum_exp;
use crate::sampling::ForwardPolicy;

/// The reachable state DAG, in topological order (parents before children).
#[derive(Clone, Debug)]
pub struct StateGraph<S> {
    pub states: Vec<S>,
    pub keys: Vec<StateKey>,
    pub masks: Vec<Vec<bool>>,
    /// Non-stop outgoing edges `(action, child index)`.
    pub children: Vec<Vec<(ActionId, usize)>>,
    index: HashMap<StateKey, usize>,
}

impl<S> StateGraph<S> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, key: &StateKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    /// Indices of states where stop is valid.
    pub fn terminal_indices(&self) -> Vec<usize> {
        self.masks
            .iter()
            .enumerate()
            .filter(|(_, m)| *m.last().unwrap())
            .map(|(i, _)| i)
            .collect()
    }

    /// Number of actions on the longest root-to-stop path, stop included.
    pub fn longest_path(&self) -> usize {
        let mut depth = vec![0usize; self.len()];
        let mut best = 0;
        for u in 0..self.len() {
            if *self.masks[u].last().unwrap() {
                best = best.max(depth[u] + 1);
            }
            for &(_, c) in &self.children[u] {
                depth[c] = depth[c].max(depth[u] + 1);
            }
        }
        best
    }
}

/// Enumerates every state reachable from the initial state.
pub fn enumerate_states<E: Environment>(
    env: &E,
    cap: usize,
) -> Result<StateGraph<E::State>, EnvError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Color {
        Open,
        Done,
    }
    let stop = env.stop_action();
    let s0 = env.initial_state();
    let mut states = vec![s0.clone()];
    let mut keys = vec![env.key(&s0)];
    let mut masks = vec![env.action_mask(&s0)];
    let mut children: Vec<Vec<(ActionId, usize)>> = vec![Vec::new()];
    let mut color = vec![Color::Open];
    let mut index: HashMap<StateKey, usize> = HashMap::new();
    index.insert(keys[0].clone(), 0);
    if cap == 0 {
        return Err(EnvError::CapExceeded { cap });
    }

    let mut postorder = Vec::new();
    let mut stack: Vec<(usize, ActionId)> = vec![(0, 0)];
    while let Some(top) = stack.last_mut() {
        let (u, next) = *top;
        if next < stop {
            top.1 += 1;
            if !masks[u][next] {
                continue;
            }
            let child = env.apply(&states[u], next)?;
            let key = env.key(&child);
            match index.get(&key) {
                Some(&c) => {
                    if color[c] == Color::Open {
                        return Err(EnvError::CycleDetected(key));
                    }
                    children[u].push((next, c));
                }
                None => {
                    if states.len() >= cap {
                        return Err(EnvError::CapExceeded { cap });
                    }
                    let c = states.len();
                    index.insert(key.clone(), c);
                    masks.push(env.action_mask(&child));
                    states.push(child);
                    keys.push(key);
                    children.push(Vec::new());
                    color.push(Color::Open);
                    children[u].push((next, c));
                    stack.push((c, 0));
                }
            }
        } else {
            color[u] = Color::Done;
            postorder.push(u);
            stack.pop();
        }
    }

    // Reverse postorder is a topological order.
    let order: Vec<usize> = postorder.into_iter().rev().collect();
    let mut new_pos = vec![0; order.len()];
    for (pos, &old) in order.iter().enumerate() {
        new_pos[old] = pos;
    }
    let mut slots: Vec<Option<E::State>> = states.into_iter().map(Some).collect();
    let states: Vec<E::State> = order.iter().map(|&o| slots[o].take().unwrap()).collect();
    let keys: Vec<StateKey> = order.iter().map(|&o| keys[o].clone()).collect();
    let masks: Vec<Vec<bool>> = order.iter().map(|&o| masks[o].clone()).collect();
    let children: Vec<Vec<(ActionId, usize)>> = order
        .iter()
        .map(|&o| children[o].iter().map(|&(a, c)| (a, new_pos[c])).collect())
        .collect();
    let index = keys.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
    Ok(StateGraph {
        states,
        keys,
        masks,
        children,
        index,
    })
}

/// Exact terminal distribution `π(x)` induced by a forward policy, by
/// forward dynamic programming over the state DAG.
#[derive(Clone, Debug)]
pub struct TerminalDistribution {
    /// Probability of terminating at each graph state (zero where stop is
    /// masked), aligned with `StateGraph::states`.
    pub probs: Vec<f64>,
}

impl TerminalDistribution {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn to_map(&self, keys: &[StateKey]) -> BTreeMap<StateKey, f64> {
        keys.iter().cloned().zip(self.probs.iter().copied()).collect()
    }
}

pub fn exact_terminal_distribution<E, P>(
    env: &E,
    graph: &StateGraph<E::State>,
    policy: &P,
) -> TerminalDistribution
where
    E: Environment,
    P: ForwardPolicy<E> + ?Sized,
{
    let refs: Vec<&E::State> = graph.states.iter().collect();
    let log_probs = policy.action_log_probs(env, &refs);
    let stop = env.stop_action();
    let mut reach = vec![0.0; graph.len()];
    reach[0] = 1.0;
    let mut probs = vec![0.0; graph.len()];
    for u in 0..graph.len() {
        let mass = reach[u];
        if mass == 0.0 {
            continue;
        }
        if graph.masks[u][stop] {
            probs[u] = mass * log_probs[u][stop].exp();
        }
        for &(a, c) in &graph.children[u] {
            reach[c] += mass * log_probs[u][a].exp();
        }
    }
    TerminalDistribution { probs }
}

/// `log Σ_x R(x)` over all states where stop is valid.
pub fn exact_log_partition<E: Environment>(env: &E, graph: &StateGraph<E::State>) -> f64 {
    let terms: Vec<f64> = graph
        .terminal_indices()
        .into_iter()
        .map(|i| env.log_reward(&graph.states[i]))
        .collect();
    log_sum_exp(&terms)
}

/// Target distribution `R(x)/Z`, aligned with graph states.
pub fn target_distribution<E: Environment>(env: &E, graph: &StateGraph<E::State>) -> Vec<f64> {
    let log_z = exact_log_partition(env, graph);
    let mut p = vec![0.0; graph.len()];
    for i in graph.terminal_indices() {
        p[i] = (env.log_reward(&graph.states[i]) - log_z).exp();
    }
    p
}

/// Exact flows and forward policy consistent with a uniform backward policy,
/// obtained by backward dynamic programming.
#[derive(Clone, Debug)]
pub struct ExactFlows {
    pub log_flow: Vec<f64>,
    pub log_pf: Vec<Vec<f64>>,
    index: HashMap<StateKey, usize>,
}

impl ExactFlows {
    pub fn log_flow_of(&self, key: &StateKey) -> Option<f64> {
        self.index.get(key).map(|&i| self.log_flow[i])
    }
}

/// Number of parents of each graph state.
pub fn parent_counts<S>(graph: &StateGraph<S>) -> Vec<usize> {
    let mut counts = vec![0; graph.len()];
    for ch in &graph.children {
        for &(_, c) in ch {
            counts[c] += 1;
        }
    }
    counts
}

pub fn exact_flows<E: Environment>(env: &E, graph: &StateGraph<E::State>) -> ExactFlows {
    let stop = env.stop_action();
    let n_actions = env.action_count();
    let n_parents = parent_counts(graph);
    let mut log_flow = vec![f64::NEG_INFINITY; graph.len()];
    let mut log_pf = vec![vec![f64::NEG_INFINITY; n_actions]; graph.len()];
    for u in (0..graph.len()).rev() {
        let log_r = if graph.masks[u][stop] {
            env.log_reward(&graph.states[u])
        } else {
            f64::NEG_INFINITY
        };
        // Edge flow into child c is F(c) * P_B(u | c) with uniform P_B.
        let edge: Vec<(ActionId, f64)> = graph.children[u]
            .iter()
            .map(|&(a, c)| (a, log_flow[c] - (n_parents[c] as f64).ln()))
            .collect();
        let mut terms: Vec<f64> = edge.iter().map(|&(_, f)| f).collect();
        terms.push(log_r);
        let f = log_sum_exp(&terms);
        log_flow[u] = f;
        for (a, e) in edge {
            log_pf[u][a] = e - f;
        }
        log_pf[u][stop] = log_r - f;
    }
    ExactFlows {
        log_flow,
        log_pf,
        index: graph
            .keys
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, k)| (k, i))
            .collect(),
    }
}

impl<E: Environment> ForwardPolicy<E> for ExactFlows {
    fn action_log_probs(&self, env: &E, states: &[&E::State]) -> Vec<Vec<f64>> {
        states
            .iter()
            .map(|s| {
                let i = self.index[&env.key(s)];
                self.log_pf[i].clone()
            })
            .collect()
    }
}

/// Counts trajectories with positive probability under `policy`, per
/// terminal state.
pub fn count_support_trajectories<E, P>(
    env: &E,
    graph: &StateGraph<E::State>,
    policy: &P,
) -> Vec<u128>
where
    E: Environment,
    P: ForwardPolicy<E> + ?Sized,
{
    let refs: Vec<&E::State> = graph.states.iter().collect();
    let log_probs = policy.action_log_probs(env, &refs);
    let stop = env.stop_action();
    let mut paths = vec![0u128; graph.len()];
    paths[0] = 1;
    let mut ending = vec![0u128; graph.len()];
    for u in 0..graph.len() {
        if paths[u] == 0 {
            continue;
        }
        if graph.masks[u][stop] && log_probs[u][stop] > f64::NEG_INFINITY {
            ending[u] = paths[u];
        }
        for &(a, c) in &graph.children[u] {
            if log_probs[u][a] > f64::NEG_INFINITY {
                paths[c] += paths[u];
            }
        }
    }
    ending
}

/// Every complete trajectory of the environment, up to `limit`.
pub fn enumerate_trajectories<E: Environment>(
    env: &E,
    graph: &StateGraph<E::State>,
    limit: usize,
) -> Result<Vec<Trajectory<E::State>>, EnvError> {
    let stop = env.stop_action();
    let mut out = Vec::new();
    let mut path_states = vec![0usize];
    let mut path_actions: Vec<ActionId> = Vec::new();
    // DFS over (node, next child slot).
    let mut stack: Vec<(usize, usize)> = vec![(0, 0)];
    while let Some(top) = stack.last_mut() {
        let (u, slot) = *top;
        if slot == 0 && graph.masks[u][stop] {
            if out.len() >= limit {
                return Err(EnvError::CapExceeded { cap: limit });
            }
            let mut actions = path_actions.clone();
            actions.push(stop);
            out.push(Trajectory {
                states: path_states.iter().map(|&i| graph.states[i].clone()).collect(),
                actions,
                log_reward: env.log_reward(&graph.states[u]),
            });
        }
        if slot < graph.children[u].len() {
            top.1 += 1;
            let (a, c) = graph.children[u][slot];
            path_states.push(c);
            path_actions.push(a);
            stack.push((c, 0));
        } else {
            stack.pop();
            path_states.pop();
            path_actions.pop();
        }
    }
    Ok(out)
}

/// Default trajectory length guard: twice the longest path when the
/// environment is enumerable under `cap`, else 128.
pub fn default_max_len<E: Environment>(env: &E, cap: usize) -> usize {
    match enumerate_states(env, cap) {
        Ok(g) => 2 * g.longest_path(),
        Err(_) => 128,
    }
}
