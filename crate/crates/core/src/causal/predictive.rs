use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::DataValues;
use super::posterior::GraphPosterior;
use super::score::BayesScorer;
use super::CausalError;
use crate::envs::DagState;
use crate::math::sample_categorical;
use crate::nn::{Activation, Optimizer, Regressor};

/// `P(X_target = value | do(interventions), evidence)`. For discrete data
/// values are category indices and the answer is a probability; for
/// linear-Gaussian data it is a density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Query {
    #[serde(default)]
    pub interventions: Vec<(usize, f64)>,
    #[serde(default)]
    pub evidence: Vec<(usize, f64)>,
    pub target: usize,
    pub value: f64,
}

impl Query {
    fn check(&self, scorer: &BayesScorer) -> Result<(), CausalError> {
        let d = scorer.num_vars();
        let bad = |m: String| Err(CausalError::InvalidQuery(m));
        let vars = self.interventions.iter().chain(&self.evidence).map(|&(v, x)| (v, x));
        for (v, x) in vars.chain(std::iter::once((self.target, self.value))) {
            if v >= d {
                return bad(format!("variable {v} out of range"));
            }
            if let DataValues::Discrete { arities, .. } = &scorer.data().values {
                if x < 0.0 || x.fract() != 0.0 || x as usize >= arities[v] {
                    return bad(format!("value {x} invalid for variable {v}"));
                }
            } else if !x.is_finite() {
                return bad(format!("value {x} for variable {v} is not finite"));
            }
        }
        if self.evidence.iter().any(|&(v, _)| v == self.target) {
            return bad("target is also evidence".into());
        }
        Ok(())
    }

    fn intervened(&self, v: usize) -> Option<f64> {
        self.interventions.iter().find(|&&(u, _)| u == v).map(|&(_, x)| x)
    }
}

/// Predictive answer under a single graph with posterior-mean mechanisms.
pub fn graph_predictive(scorer: &BayesScorer, graph: &DagState, query: &Query) -> Result<f64, CausalError> {
    query.check(scorer)?;
    match &scorer.data().values {
        DataValues::Discrete { rows, arities } => Ok(discrete_predictive(scorer, rows, arities, graph, query)),
        DataValues::Continuous(rows) => gaussian_predictive(scorer, rows, graph, query),
    }
}

/// Bayesian model average `Σ_G P(G | D) P(y | q, G, D)`.
pub fn posterior_predictive(scorer: &BayesScorer, posterior: &GraphPosterior, query: &Query) -> Result<f64, CausalError> {
    let mut total = 0.0;
    for (g, &p) in posterior.graphs.iter().zip(&posterior.probs) {
        if p > 0.0 {
            total += p * graph_predictive(scorer, g, query)?;
        }
    }
    Ok(total)
}

fn kept(scorer: &BayesScorer, node: usize) -> Vec<usize> {
    let data = scorer.data();
    (0..data.num_rows()).filter(|&r| data.intervened[r] != Some(node)).collect()
}

fn discrete_predictive(
    scorer: &BayesScorer,
    rows: &[Vec<usize>],
    arities: &[usize],
    graph: &DagState,
    q: &Query,
) -> f64 {
    let d = arities.len();
    let alpha = scorer.config().alpha;
    if let Some(x) = q.intervened(q.target) {
        return if x == q.value { 1.0 } else { 0.0 };
    }
    // Posterior-mean conditional tables, indexed [parent config][value].
    let parents: Vec<Vec<usize>> = (0..d).map(|i| graph.parents_of(i, d)).collect();
    let cpts: Vec<Vec<Vec<f64>>> = (0..d)
        .map(|i| {
            let r = arities[i];
            let q_i: usize = parents[i].iter().map(|&j| arities[j]).product();
            let mut counts = vec![vec![0.0; r]; q_i];
            for row in kept(scorer, i) {
                let cfg = parents[i].iter().fold(0, |c, &j| c * arities[j] + rows[row][j]);
                counts[cfg][rows[row][i]] += 1.0;
            }
            counts
                .into_iter()
                .map(|c| {
                    let n: f64 = c.iter().sum();
                    c.iter().map(|&k| (alpha + k) / (r as f64 * alpha + n)).collect()
                })
                .collect()
        })
        .collect();
    let fixed: Vec<Option<usize>> = (0..d)
        .map(|v| {
            q.intervened(v)
                .or_else(|| q.evidence.iter().find(|&&(u, _)| u == v).map(|&(_, x)| x))
                .map(|x| x as usize)
        })
        .collect();
    let mut num = 0.0;
    let mut den = 0.0;
    let mut x = vec![0usize; d];
    loop {
        if (0..d).all(|v| fixed[v].map_or(true, |f| f == x[v])) {
            let mut p = 1.0;
            for i in 0..d {
                if q.intervened(i).is_none() {
                    let cfg = parents[i].iter().fold(0, |c, &j| c * arities[j] + x[j]);
                    p *= cpts[i][cfg][x[i]];
                }
            }
            den += p;
            if x[q.target] == q.value as usize {
                num += p;
            }
        }
        // Odometer over all joint assignments.
        let mut k = 0;
        while k < d {
            x[k] += 1;
            if x[k] < arities[k] {
                break;
            }
            x[k] = 0;
            k += 1;
        }
        if k == d {
            break;
        }
    }
    num / den
}

fn topological_order(graph: &DagState, d: usize) -> Vec<usize> {
    let mut order = Vec::with_capacity(d);
    let mut placed = vec![false; d];
    while order.len() < d {
        for v in 0..d {
            if !placed[v] && graph.parents_of(v, d).iter().all(|&p| placed[p]) {
                placed[v] = true;
                order.push(v);
            }
        }
    }
    order
}

fn gaussian_predictive(scorer: &BayesScorer, rows: &[Vec<f64>], graph: &DagState, q: &Query) -> Result<f64, CausalError> {
    let d = scorer.num_vars();
    if q.intervened(q.target).is_some() {
        return Err(CausalError::InvalidQuery("target of a density query cannot be intervened".into()));
    }
    let s2 = scorer.config().noise_var;
    let ridge = s2 / scorer.config().weight_var;
    let mut mean = vec![0.0; d];
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for v in topological_order(graph, d) {
        if let Some(x) = q.intervened(v) {
            mean[v] = x;
            continue;
        }
        let pa = graph.parents_of(v, d);
        if pa.is_empty() {
            cov[(v, v)] = s2;
            continue;
        }
        let rows_v = kept(scorer, v);
        let x = DMatrix::from_fn(rows_v.len(), pa.len(), |i, j| rows[rows_v[i]][pa[j]]);
        let y = DVector::from_fn(rows_v.len(), |i, _| rows[rows_v[i]][v]);
        let gram = x.transpose() * &x + DMatrix::identity(pa.len(), pa.len()) * ridge;
        let w = gram
            .cholesky()
            .expect("ridge system is positive definite")
            .solve(&(x.transpose() * y));
        mean[v] = pa.iter().zip(w.iter()).map(|(&p, wi)| wi * mean[p]).sum();
        // Cov(v, u) = Σ_p w_p Cov(p, u) for every u placed so far.
        for u in 0..d {
            let c: f64 = pa.iter().zip(w.iter()).map(|(&p, wi)| wi * cov[(p, u)]).sum();
            cov[(v, u)] = c;
            cov[(u, v)] = c;
        }
        let var: f64 = pa
            .iter()
            .zip(w.iter())
            .map(|(&p, wp)| pa.iter().zip(w.iter()).map(|(&r, wr)| wp * wr * cov[(p, r)]).sum::<f64>())
            .sum();
        cov[(v, v)] = var + s2;
    }
    let obs: Vec<(usize, f64)> = q
        .evidence
        .iter()
        .copied()
        .filter(|&(v, _)| q.intervened(v).is_none())
        .collect();
    let t = q.target;
    let (mu, var) = if obs.is_empty() {
        (mean[t], cov[(t, t)])
    } else {
        let k = obs.len();
        let s_oo = DMatrix::from_fn(k, k, |i, j| cov[(obs[i].0, obs[j].0)]);
        let s_to = DVector::from_fn(k, |i, _| cov[(t, obs[i].0)]);
        let resid = DVector::from_fn(k, |i, _| obs[i].1 - mean[obs[i].0]);
        let chol = s_oo
            .cholesky()
            .ok_or_else(|| CausalError::InvalidQuery("evidence covariance is singular".into()))?;
        (mean[t] + s_to.dot(&chol.solve(&resid)), cov[(t, t)] - s_to.dot(&chol.solve(&s_to)))
    };
    let z = q.value - mu;
    Ok((-0.5 * z * z / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt())
}

/// Settings for fitting a query-to-answer network on posterior samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmortizedPredictiveConfig {
    pub hidden: Vec<usize>,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub final_lr_fraction: f64,
}

impl Default for AmortizedPredictiveConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            steps: 4000,
            batch_size: 32,
            lr: 3e-3,
            final_lr_fraction: 0.02,
        }
    }
}

/// Network `g(q)` trained so that `g(q) ≈ E_{G∼P(G|D)}[P(y | q, G, D)]`.
#[derive(Clone, Debug)]
pub struct AmortizedPredictor {
    reg: Regressor,
    layout: QueryLayout,
}

#[derive(Clone, Debug)]
struct QueryLayout {
    /// Per-variable value width: arity for discrete data, 1 for real data.
    widths: Vec<usize>,
}

impl QueryLayout {
    fn of(scorer: &BayesScorer) -> Self {
        let widths = match &scorer.data().values {
            DataValues::Discrete { arities, .. } => arities.clone(),
            DataValues::Continuous(_) => vec![1; scorer.num_vars()],
        };
        Self { widths }
    }

    fn dim(&self) -> usize {
        self.widths.iter().map(|w| 3 + 3 * w).sum()
    }

    fn encode_value(&self, v: usize, x: f64, out: &mut [f64]) {
        if self.widths[v] == 1 {
            out[0] = x;
        } else {
            out[x as usize] = 1.0;
        }
    }

    /// Per variable: [do flag | do value | evidence flag | evidence value |
    /// target flag | target value].
    fn encode(&self, q: &Query) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        let mut off = 0;
        for (v, &w) in self.widths.iter().enumerate() {
            let block = &mut out[off..off + 3 + 3 * w];
            if let Some(x) = q.intervened(v) {
                block[0] = 1.0;
                self.encode_value(v, x, &mut block[1..1 + w]);
            }
            if let Some(&(_, x)) = q.evidence.iter().find(|&&(u, _)| u == v) {
                block[1 + w] = 1.0;
                self.encode_value(v, x, &mut block[2 + w..2 + 2 * w]);
            }
            if q.target == v {
                block[2 + 2 * w] = 1.0;
                self.encode_value(v, q.value, &mut block[3 + 2 * w..3 + 3 * w]);
            }
            off += 3 + 3 * w;
        }
        out
    }
}

impl AmortizedPredictor {
    pub fn predict(&self, query: &Query) -> f64 {
        let x = Array2::from_shape_vec((1, self.layout.dim()), self.layout.encode(query)).expect("encoding width");
        self.reg.predict(x.view()).expect("encoding width")[[0, 0]]
    }
}

/// Fits `g` by stochastic regression: each example pairs a training query
/// with the predictive answer under one graph drawn from `posterior`.
pub fn amortized_predictive_train<R: Rng + ?Sized>(
    scorer: &BayesScorer,
    posterior: &GraphPosterior,
    queries: &[Query],
    config: &AmortizedPredictiveConfig,
    rng: &mut R,
) -> Result<AmortizedPredictor, CausalError> {
    if queries.is_empty() || config.batch_size == 0 {
        return Err(CausalError::Config("need at least one query and a positive batch size".into()));
    }
    let layout = QueryLayout::of(scorer);
    let encoded: Vec<Vec<f64>> = queries.iter().map(|q| layout.encode(q)).collect();
    // Per-graph answers, computed once: table[g][q].
    let live: Vec<usize> = (0..posterior.graphs.len()).filter(|&g| posterior.probs[g] > 0.0).collect();
    let weights: Vec<f64> = live.iter().map(|&g| posterior.probs[g]).collect();
    let mut table = Vec::with_capacity(live.len());
    for &g in &live {
        let row: Result<Vec<f64>, _> = queries.iter().map(|q| graph_predictive(scorer, &posterior.graphs[g], q)).collect();
        table.push(row?);
    }
    let mut reg = Regressor::new(layout.dim(), &config.hidden, 1, Activation::Tanh, rng);
    let b = config.batch_size;
    let mut x = Array2::zeros((b, layout.dim()));
    let mut y = Array2::zeros((b, 1));
    for step in 0..config.steps {
        for i in 0..b {
            let qi = rng.gen_range(0..queries.len());
            let gi = sample_categorical(&weights, rng);
            x.row_mut(i).assign(&ndarray::ArrayView1::from(&encoded[qi]));
            y[[i, 0]] = table[gi][qi];
        }
        let frac = step as f64 / config.steps.max(1) as f64;
        let lr = config.lr * config.final_lr_fraction.powf(frac);
        reg.fit_step(x.view(), y.view(), lr, Optimizer::adam())?;
    }
    Ok(AmortizedPredictor { reg, layout })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal::{exact_posterior, ObsDataset, ScoreConfig};
    use std::sync::Arc;

    fn binary_pair() -> BayesScorer {
        let rows = vec![vec![0, 0], vec![0, 0], vec![1, 1], vec![1, 0], vec![1, 1]];
        let ds = ObsDataset::discrete(vec!["A".into(), "B".into()], rows, vec![2, 2]).unwrap();
        BayesScorer::new(Arc::new(ds), ScoreConfig::default()).unwrap()
    }

    #[test]
    fn discrete_marginal_under_empty_graph() {
        // A counts (2, 3) with α = 1: P(A=1) = 4/7.
        let s = binary_pair();
        let q = Query { interventions: vec![], evidence: vec![], target: 0, value: 1.0 };
        let p = graph_predictive(&s, &DagState::empty(), &q).unwrap();
        assert!((p - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn intervention_cuts_incoming_edge() {
        let s = binary_pair();
        let a_to_b = DagState::from_adjacency(0b0010, 2).unwrap();
        // do(B = 1) leaves A at its marginal under A → B.
        let q = Query { interventions: vec![(1, 1.0)], evidence: vec![], target: 0, value: 1.0 };
        assert!((graph_predictive(&s, &a_to_b, &q).unwrap() - 4.0 / 7.0).abs() < 1e-12);
        // do(A = 1) propagates: B | A=1 counts (1, 2) → 3/5.
        let q = Query { interventions: vec![(0, 1.0)], evidence: vec![], target: 1, value: 1.0 };
        assert!((graph_predictive(&s, &a_to_b, &q).unwrap() - 3.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn predictive_answers_sum_to_one() {
        let s = binary_pair();
        let post = exact_posterior(&s).unwrap();
        for target in 0..2 {
            let total: f64 = (0..2)
                .map(|v| {
                    let q = Query { interventions: vec![(1 - target, 0.0)], evidence: vec![], target, value: v as f64 };
                    posterior_predictive(&s, &post, &q).unwrap()
                })
                .sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_intervention_on_chain() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let ds = crate::causal::data::linear_gaussian_chain(400, &[2.0], 0.1f64.sqrt(), &mut rng);
        let s = BayesScorer::new(Arc::new(ds), ScoreConfig::default()).unwrap();
        let g = DagState::from_adjacency(0b0010, 2).unwrap();
        // do(A = 1): B ~ N(≈2, 0.1); density peaks near 2.
        let at = |v: f64| {
            graph_predictive(&s, &g, &Query { interventions: vec![(0, 1.0)], evidence: vec![], target: 1, value: v }).unwrap()
        };
        assert!(at(2.0) > at(1.7) && at(2.0) > at(2.3));
        assert!((at(2.0) - 1.0 / (2.0 * std::f64::consts::PI * 0.1).sqrt()).abs() < 0.1);
    }

    #[test]
    fn gaussian_conditioning_on_child() {
        let ds = ObsDataset::continuous(vec!["A".into(), "B".into()], vec![]).unwrap();
        let s = BayesScorer::new(Arc::new(ds), ScoreConfig::default()).unwrap();
        // No data: w = 0, so observing B says nothing about A.
        let g = DagState::from_adjacency(0b0010, 2).unwrap();
        let with = graph_predictive(&s, &g, &Query { interventions: vec![], evidence: vec![(1, 3.0)], target: 0, value: 0.2 }).unwrap();
        let without = graph_predictive(&s, &g, &Query { interventions: vec![], evidence: vec![], target: 0, value: 0.2 }).unwrap();
        assert!((with - without).abs() < 1e-12);
    }

    #[test]
    fn invalid_queries_are_rejected() {
        let s = binary_pair();
        let g = DagState::empty();
        for q in [
            Query { interventions: vec![], evidence: vec![], target: 2, value: 0.0 },
            Query { interventions: vec![], evidence: vec![], target: 0, value: 2.0 },
            Query { interventions: vec![], evidence: vec![(0, 1.0)], target: 0, value: 1.0 },
        ] {
            assert!(matches!(graph_predictive(&s, &g, &q), Err(CausalError::InvalidQuery(_))));
        }
    }
}
