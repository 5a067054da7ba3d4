use std::sync::Arc;

use gfnlab::causal::{
    amortized_predictive_train, edge_marginals, exact_posterior, graph_predictive, linear_gaussian_chain,
    posterior_entropy, posterior_predictive, AmortizedPredictiveConfig, BayesScorer, GraphPosterior, ObsDataset,
    Query, ScoreConfig,
};
use gfnlab::envs::DagState;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

fn names(d: usize) -> Vec<String> {
    (0..d).map(|i| ((b'A' + i as u8) as char).to_string()).collect()
}

fn scorer(data: ObsDataset, cfg: ScoreConfig) -> BayesScorer {
    BayesScorer::new(Arc::new(data), cfg).unwrap()
}

fn graph(adj: u64, d: usize) -> DagState {
    DagState::from_adjacency(adj, d).unwrap()
}

fn chain_data(rows: usize, seed: u64) -> ObsDataset {
    linear_gaussian_chain(rows, &[0.5, 0.5], 0.1f64.sqrt(), &mut ChaCha8Rng::seed_from_u64(seed))
}

#[test]
fn empty_dataset_has_unit_evidence() {
    let cont = scorer(ObsDataset::continuous(names(2), vec![]).unwrap(), ScoreConfig::default());
    let disc = scorer(ObsDataset::discrete(names(2), vec![], vec![2, 3]).unwrap(), ScoreConfig::default());
    for adj in [0, 0b10, 0b100] {
        assert_eq!(cont.log_marginal_likelihood(&graph(adj, 2)), 0.0);
        assert_eq!(disc.log_marginal_likelihood(&graph(adj, 2)), 0.0);
    }
}

#[test]
fn one_parent_gaussian_evidence_matches_quadrature() {
    let rows = vec![vec![0.3, 0.5], vec![-1.2, -0.4], vec![0.8, 0.1], vec![0.1, 0.35], vec![-0.5, -0.6]];
    let cfg = ScoreConfig {
        noise_var: 0.2,
        weight_var: 1.5,
        ..ScoreConfig::default()
    };
    let s = scorer(ObsDataset::continuous(names(2), rows.clone()).unwrap(), cfg);
    let normal = |x: f64, var: f64| (-0.5 * x * x / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
    // ∫ N(w; 0, τ²) Π N(b_i; w a_i, σ²) dw by the midpoint rule on [−12, 12].
    let (n, lo, hi) = (200_000, -12.0, 12.0);
    let h = (hi - lo) / n as f64;
    let mut integral = 0.0;
    for k in 0..n {
        let w = lo + (k as f64 + 0.5) * h;
        let lik: f64 = rows.iter().map(|r| normal(r[1] - w * r[0], cfg.noise_var)).product();
        integral += normal(w, cfg.weight_var) * lik * h;
    }
    assert!((s.family_score(1, 0b1) - integral.ln()).abs() < 1e-8);
    // Root family: independent N(0, σ²) draws.
    let root: f64 = rows.iter().map(|r| normal(r[0], cfg.noise_var).ln()).sum();
    assert!((s.family_score(0, 0) - root).abs() < 1e-10);
}

#[test]
fn edge_penalty_prior() {
    let s = scorer(ObsDataset::continuous(names(3), vec![]).unwrap(), ScoreConfig { lambda: 1.0, ..ScoreConfig::default() });
    let ratio = (s.log_joint(&graph(0, 3)) - s.log_joint(&graph(0b10, 3))).exp();
    assert!((ratio - std::f64::consts::E).abs() < 1e-12);

    let s = scorer(ObsDataset::continuous(names(3), vec![]).unwrap(), ScoreConfig { lambda: 0.5, ..ScoreConfig::default() });
    let post = exact_posterior(&s).unwrap();
    assert_eq!(post.graphs.len(), 25);
    assert!((post.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let z: f64 = post.graphs.iter().map(|g| (-0.5 * g.edge_count() as f64).exp()).sum();
    for (g, &p) in post.graphs.iter().zip(&post.probs) {
        assert!((p - (-0.5 * g.edge_count() as f64).exp() / z).abs() < 1e-12);
    }
}

#[test]
fn empty_data_flat_prior_is_uniform_over_two_node_dags() {
    let s = scorer(ObsDataset::continuous(names(2), vec![]).unwrap(), ScoreConfig::default());
    let post = exact_posterior(&s).unwrap();
    assert_eq!(post.graphs.len(), 3);
    for &p in &post.probs {
        assert!((p - 1.0 / 3.0).abs() < 1e-12);
    }
    let m = edge_marginals(&post);
    assert!((m.probs[0][1] - 1.0 / 3.0).abs() < 1e-12);
    assert!((m.probs[1][0] - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn correlated_pair_prefers_either_edge_over_none() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data = linear_gaussian_chain(100, &[0.9], 0.3, &mut rng);
    let s = scorer(data, ScoreConfig { noise_var: 0.09, ..ScoreConfig::default() });
    let empty = s.log_joint(&graph(0, 2));
    assert!(s.log_joint(&graph(0b10, 2)) > empty);
    assert!(s.log_joint(&graph(0b100, 2)) > empty);
}

#[test]
fn chain_data_puts_majority_mass_on_the_chain_class() {
    let s = scorer(chain_data(200, 0), ScoreConfig::default());
    let post = exact_posterior(&s).unwrap();
    // A→B→C, C→B→A and A←B→C share a skeleton and have no collider.
    let class: Vec<DagState> = [
        (0, 1, 1, 2),
        (2, 1, 1, 0),
        (1, 0, 1, 2),
    ]
    .iter()
    .map(|&(a, b, c, e)| graph(1 << (a * 3 + b) | 1 << (c * 3 + e), 3))
    .collect();
    let mass: f64 = class.iter().map(|g| post.prob_of(g)).sum();
    assert!(mass > 0.5, "chain class mass {mass}");
}

#[test]
fn posterior_ignores_a_constant_shift_in_scores() {
    let s = scorer(chain_data(50, 2), ScoreConfig::default());
    let post = exact_posterior(&s).unwrap();
    let joint: Vec<f64> = post.graphs.iter().map(|g| s.log_joint(g) + 1234.5).collect();
    let max = joint.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = joint.iter().map(|l| (l - max).exp()).sum();
    for (l, &p) in joint.iter().zip(&post.probs) {
        assert!(((l - max).exp() / z - p).abs() < 1e-12);
    }
}

#[test]
fn point_mass_marginals_are_the_adjacency() {
    let g = graph(1 << 1 | 1 << 5, 3);
    let post = GraphPosterior::from_samples(3, &[g.clone(), g.clone()]);
    let m = edge_marginals(&post);
    for i in 0..3 {
        for j in 0..3 {
            let want = if g.has_edge(i, j, 3) { 1.0 } else { 0.0 };
            assert_eq!(m.probs[i][j], want);
        }
    }
}

fn discrete_toy() -> ObsDataset {
    let rows = vec![vec![0, 0], vec![0, 0], vec![1, 1], vec![1, 1], vec![1, 0], vec![0, 0], vec![1, 1], vec![0, 1]];
    ObsDataset::discrete(names(2), rows, vec![2, 2]).unwrap()
}

/// Dirichlet family evidence and posterior-mean tables, recomputed directly
/// from counts.
fn brute_force_predictive(rows: &[Vec<usize>], alpha: f64, target: usize, value: usize) -> f64 {
    let count = |f: &dyn Fn(&Vec<usize>) -> bool| rows.iter().filter(|r| f(r)).count() as f64;
    let fam = |counts: &[f64]| {
        let n: f64 = counts.iter().sum();
        ln_gamma(2.0 * alpha) - ln_gamma(2.0 * alpha + n)
            + counts.iter().map(|&c| ln_gamma(alpha + c) - ln_gamma(alpha)).sum::<f64>()
    };
    let marg = |v: usize| [count(&|r| r[v] == 0), count(&|r| r[v] == 1)];
    let cond = |child: usize, parent: usize, pv: usize| {
        [
            count(&|r| r[parent] == pv && r[child] == 0),
            count(&|r| r[parent] == pv && r[child] == 1),
        ]
    };
    let mean = |c: [f64; 2], k: usize| (alpha + c[k]) / (2.0 * alpha + c[0] + c[1]);
    // Empty, A→B, B→A.
    let log_ev = [
        fam(&marg(0)) + fam(&marg(1)),
        fam(&marg(0)) + fam(&cond(1, 0, 0)) + fam(&cond(1, 0, 1)),
        fam(&marg(1)) + fam(&cond(0, 1, 0)) + fam(&cond(0, 1, 1)),
    ];
    let other = 1 - target;
    let preds = [
        mean(marg(target), value),
        if target == 1 {
            (0..2).map(|a| mean(marg(0), a) * mean(cond(1, 0, a), value)).sum()
        } else {
            mean(marg(0), value)
        },
        if target == 0 {
            (0..2).map(|b| mean(marg(1), b) * mean(cond(0, 1, b), value)).sum()
        } else {
            mean(marg(other), value)
        },
    ];
    let max = log_ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_ev.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter().zip(preds).map(|(wi, p)| wi / z * p).sum()
}

#[test]
fn discrete_predictive_matches_full_enumeration() {
    let data = discrete_toy();
    let rows = match &data.values {
        gfnlab::causal::DataValues::Discrete { rows, .. } => rows.clone(),
        _ => unreachable!(),
    };
    let s = scorer(data, ScoreConfig { alpha: 0.7, ..ScoreConfig::default() });
    let post = exact_posterior(&s).unwrap();
    for target in 0..2 {
        for value in 0..2 {
            let q = Query { interventions: vec![], evidence: vec![], target, value: value as f64 };
            let got = posterior_predictive(&s, &post, &q).unwrap();
            let want = brute_force_predictive(&rows, 0.7, target, value);
            assert!((got - want).abs() < 1e-12, "target {target} value {value}: {got} vs {want}");
        }
    }
}

#[test]
fn predictive_of_single_graph_posterior_is_that_graph() {
    let s = scorer(discrete_toy(), ScoreConfig::default());
    let g = graph(0b10, 2);
    let post = GraphPosterior::from_samples(2, &[g.clone()]);
    let q = Query { interventions: vec![], evidence: vec![(0, 1.0)], target: 1, value: 1.0 };
    assert_eq!(posterior_predictive(&s, &post, &q).unwrap(), graph_predictive(&s, &g, &q).unwrap());
}

fn all_queries() -> Vec<Query> {
    let mut qs = Vec::new();
    for target in 0..2 {
        let other = 1 - target;
        for value in 0..2 {
            qs.push(Query { interventions: vec![], evidence: vec![], target, value: value as f64 });
            for x in 0..2 {
                let x = x as f64;
                qs.push(Query { interventions: vec![(other, x)], evidence: vec![], target, value: value as f64 });
                qs.push(Query { interventions: vec![], evidence: vec![(other, x)], target, value: value as f64 });
            }
        }
    }
    qs
}

#[test]
fn amortized_predictor_matches_point_mass_table_and_generalizes() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = scorer(linear_gaussian_chain(100, &[0.8], 0.5, &mut rng), ScoreConfig { noise_var: 0.25, ..ScoreConfig::default() });
    let g = graph(0b10, 2);
    let post = GraphPosterior::from_samples(2, &[g.clone()]);
    // Density of B under do(A = x), on a grid; midpoints are held out.
    let query = |x: f64, y: f64| Query { interventions: vec![(0, x)], evidence: vec![], target: 1, value: y };
    let grid = |k: usize, half: bool| {
        let off = if half { 0.5 } else { 0.0 };
        (0..k).map(move |i| -1.0 + 2.0 * (i as f64 + off) / 10.0)
    };
    let train: Vec<Query> = grid(11, false).flat_map(|x| grid(11, false).map(move |y| query(x, y))).collect();
    let held: Vec<Query> = grid(10, true).flat_map(|x| grid(10, true).map(move |y| query(x, y))).collect();
    let cfg = AmortizedPredictiveConfig { steps: 6000, ..AmortizedPredictiveConfig::default() };
    let net = amortized_predictive_train(&s, &post, &train, &cfg, &mut rng).unwrap();
    let worst = |qs: &[Query]| {
        qs.iter()
            .map(|q| (net.predict(q) - graph_predictive(&s, &g, q).unwrap()).abs())
            .fold(0.0, f64::max)
    };
    let (seen, unseen) = (worst(&train), worst(&held));
    assert!(seen < 0.02, "train error {seen}");
    assert!(unseen < 0.02, "held-out error {unseen}");
}

#[test]
fn amortized_predictor_learns_full_posterior_average() {
    let s = scorer(discrete_toy(), ScoreConfig::default());
    let post = exact_posterior(&s).unwrap();
    let queries = all_queries();
    let cfg = AmortizedPredictiveConfig { steps: 4000, ..AmortizedPredictiveConfig::default() };
    let net = amortized_predictive_train(&s, &post, &queries, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    for q in &queries {
        let want = posterior_predictive(&s, &post, q).unwrap();
        assert!((net.predict(q) - want).abs() < 0.02);
    }
}

#[test]
fn duplicating_data_does_not_increase_entropy() {
    let base = chain_data(30, 4);
    let mut last = f64::INFINITY;
    for k in [1, 2, 4, 8, 16] {
        let s = scorer(base.duplicated(k), ScoreConfig::default());
        let h = posterior_entropy(&exact_posterior(&s).unwrap());
        assert!(h <= last + 1e-9, "k {k}: {h} > {last}");
        last = h;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn score_decomposes_and_posterior_normalizes(seed in any::<u64>(), rows in 1usize..40) {
        let s = scorer(chain_data(rows, seed), ScoreConfig::default());
        let post = exact_posterior(&s).unwrap();
        prop_assert!((post.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for g in &post.graphs {
            let sum: f64 = (0..3)
                .map(|i| s.family_score(i, g.parents_of(i, 3).iter().fold(0, |m, &p| m | 1 << p)))
                .sum();
            prop_assert!((s.log_marginal_likelihood(g) - sum).abs() < 1e-9);
        }
        let m = edge_marginals(&post);
        for i in 0..3 {
            prop_assert_eq!(m.probs[i][i], 0.0);
            for j in 0..3 {
                prop_assert!(m.probs[i][j] + m.probs[j][i] <= 1.0 + 1e-9);
            }
        }
    }
}
