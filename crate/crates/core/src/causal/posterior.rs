use rand::Rng;

use super::score::BayesScorer;
use super::CausalError;
use crate::envs::{DagEnv, DagState, GraphScorer};
use crate::gfn::GfnModel;
use crate::math::log_sum_exp;
use crate::oracle::{enumerate_states, exact_terminal_distribution};
use crate::sampling::sample_trajectories;

/// Largest dimension for which every DAG is enumerated.
pub const MAX_EXACT_DIM: usize = 4;

/// Weighted set of graphs: an exact table or an empirical sample.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphPosterior {
    pub d: usize,
    pub graphs: Vec<DagState>,
    pub probs: Vec<f64>,
    /// Number of draws for an empirical posterior, `None` if exact.
    pub samples: Option<usize>,
}

impl GraphPosterior {
    pub fn prob_of(&self, graph: &DagState) -> f64 {
        self.graphs
            .iter()
            .zip(&self.probs)
            .filter(|(g, _)| g.adj == graph.adj)
            .map(|(_, p)| p)
            .sum()
    }

    /// Empirical posterior of i.i.d. draws.
    pub fn from_samples(d: usize, draws: &[DagState]) -> Self {
        let mut counts: std::collections::BTreeMap<u64, usize> = Default::default();
        for g in draws {
            *counts.entry(g.adj).or_default() += 1;
        }
        let n = draws.len().max(1) as f64;
        let (graphs, probs) = counts
            .into_iter()
            .map(|(adj, c)| (DagState::from_adjacency(adj, d).expect("sampled graphs are acyclic"), c as f64 / n))
            .unzip();
        Self {
            d,
            graphs,
            probs,
            samples: Some(draws.len()),
        }
    }

    /// Exact terminal distribution of a trained sampler.
    pub fn from_model<S: GraphScorer>(env: &DagEnv<S>, model: &GfnModel) -> Result<Self, CausalError> {
        let d = env.nodes();
        if d > MAX_EXACT_DIM {
            return Err(CausalError::DimensionTooLarge { d, max: MAX_EXACT_DIM });
        }
        let graph = enumerate_states(env, usize::MAX)?;
        let dist = exact_terminal_distribution(env, &graph, model);
        Ok(Self {
            d,
            graphs: graph.states.clone(),
            probs: dist.probs,
            samples: None,
        })
    }

    /// `n` graphs drawn from a trained sampler.
    pub fn sample_model<S: GraphScorer, R: Rng + ?Sized>(
        env: &DagEnv<S>,
        model: &GfnModel,
        n: usize,
        rng: &mut R,
    ) -> Result<Self, CausalError> {
        let d = env.nodes();
        let trajs = sample_trajectories(env, model, n, d * d + 1, rng)?;
        let draws: Vec<DagState> = trajs.iter().map(|t| *t.terminal()).collect();
        Ok(Self::from_samples(d, &draws))
    }

    /// Total variation times two against another posterior over the same
    /// graph space.
    pub fn l1_distance(&self, other: &GraphPosterior) -> f64 {
        let mut all: std::collections::BTreeMap<u64, (f64, f64)> = Default::default();
        for (g, p) in self.graphs.iter().zip(&self.probs) {
            all.entry(g.adj).or_default().0 += p;
        }
        for (g, p) in other.graphs.iter().zip(&other.probs) {
            all.entry(g.adj).or_default().1 += p;
        }
        all.values().map(|(a, b)| (a - b).abs()).sum()
    }
}

/// Exact posterior `P(G | D)` by enumeration of all DAGs.
pub fn exact_posterior(scorer: &BayesScorer) -> Result<GraphPosterior, CausalError> {
    let d = scorer.num_vars();
    if d > MAX_EXACT_DIM {
        return Err(CausalError::DimensionTooLarge { d, max: MAX_EXACT_DIM });
    }
    let env = DagEnv::uniform(d);
    let graph = enumerate_states(&env, usize::MAX)?;
    let log_joint: Vec<f64> = graph.states.iter().map(|g| scorer.log_joint(g)).collect();
    let log_norm = log_sum_exp(&log_joint);
    if !log_norm.is_finite() {
        return Err(CausalError::NonFiniteEvidence);
    }
    Ok(GraphPosterior {
        d,
        graphs: graph.states,
        probs: log_joint.iter().map(|l| (l - log_norm).exp()).collect(),
        samples: None,
    })
}

/// Posterior edge probabilities `P(i → j | D)` with standard errors (zero
/// for exact posteriors).
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeMarginals {
    pub probs: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
}

pub fn edge_marginals(posterior: &GraphPosterior) -> EdgeMarginals {
    let d = posterior.d;
    let mut probs = vec![vec![0.0; d]; d];
    for (g, p) in posterior.graphs.iter().zip(&posterior.probs) {
        for (i, j) in g.edges(d) {
            probs[i][j] += p;
        }
    }
    let stderr = probs
        .iter()
        .map(|row| {
            row.iter()
                .map(|&p| match posterior.samples {
                    Some(n) if n > 0 => (p * (1.0 - p) / n as f64).sqrt(),
                    _ => 0.0,
                })
                .collect()
        })
        .collect();
    EdgeMarginals { probs, stderr }
}

/// Posterior entropy in nats.
pub fn posterior_entropy(posterior: &GraphPosterior) -> f64 {
    crate::math::entropy(&posterior.probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal::{data::linear_gaussian_chain, ScoreConfig};
    use rand::SeedableRng;
    use std::sync::Arc;

    fn chain_scorer(rows: usize) -> BayesScorer {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let ds = linear_gaussian_chain(rows, &[1.5, -1.5], 0.1f64.sqrt(), &mut rng);
        BayesScorer::new(Arc::new(ds), ScoreConfig::default()).unwrap()
    }

    #[test]
    fn exact_posterior_normalizes_over_all_dags() {
        let post = exact_posterior(&chain_scorer(30)).unwrap();
        assert_eq!(post.graphs.len(), 25);
        assert!((post.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_data_gives_prior() {
        let ds = crate::causal::ObsDataset::continuous(vec!["A".into(), "B".into()], vec![]).unwrap();
        let s = BayesScorer::new(Arc::new(ds), ScoreConfig { lambda: 1.0, ..Default::default() }).unwrap();
        let post = exact_posterior(&s).unwrap();
        let z = 1.0 + 2.0 * (-1.0f64).exp();
        assert!((post.prob_of(&DagState::empty()) - 1.0 / z).abs() < 1e-12);
    }

    #[test]
    fn marginals_of_exact_table() {
        let post = exact_posterior(&chain_scorer(50)).unwrap();
        let m = edge_marginals(&post);
        for i in 0..3 {
            assert_eq!(m.probs[i][i], 0.0);
            for j in 0..3 {
                assert!((0.0..=1.0 + 1e-12).contains(&m.probs[i][j]));
                assert_eq!(m.stderr[i][j], 0.0);
            }
        }
        // A and B are strongly dependent: some edge between them.
        assert!(m.probs[0][1] + m.probs[1][0] > 0.99);
    }

    #[test]
    fn empirical_posterior_counts() {
        let g = DagState::from_adjacency(0b10, 2).unwrap();
        let post = GraphPosterior::from_samples(2, &[g, g, DagState::empty(), g]);
        assert_eq!(post.prob_of(&g), 0.75);
        let m = edge_marginals(&post);
        assert_eq!(m.probs[0][1], 0.75);
        assert!((m.stderr[0][1] - (0.75f64 * 0.25 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn too_many_variables_is_an_error() {
        let ds = crate::causal::ObsDataset::continuous((0..5).map(|i| i.to_string()).collect(), vec![]).unwrap();
        let s = BayesScorer::new(Arc::new(ds), ScoreConfig::default()).unwrap();
        assert!(matches!(exact_posterior(&s), Err(CausalError::DimensionTooLarge { d: 5, .. })));
    }
}
