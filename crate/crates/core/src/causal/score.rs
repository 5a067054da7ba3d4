use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::data::{DataValues, ObsDataset};
use super::CausalError;
use crate::envs::{DagState, GraphScorer};

/// Likelihood hyperparameters. `noise_var` and `weight_var` apply to
/// linear-Gaussian data, `alpha` to discrete data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoreConfig {
    pub noise_var: f64,
    pub weight_var: f64,
    pub alpha: f64,
    /// Edge penalty of the prior `P(G) ∝ exp(−λ|E|)`.
    pub lambda: f64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            noise_var: 0.1,
            weight_var: 1.0,
            alpha: 1.0,
            lambda: 0.0,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<(), CausalError> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(self.noise_var) || !ok(self.weight_var) || !ok(self.alpha) {
            return Err(CausalError::Config("variances and alpha must be positive".into()));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(CausalError::Config("lambda must be non-negative".into()));
        }
        Ok(())
    }
}

/// Unnormalized log prior `−λ|E|`.
pub fn graph_log_prior(graph: &DagState, lambda: f64) -> f64 {
    -lambda * graph.edge_count() as f64
}

/// Decomposable marginal likelihood with a per-family cache.
#[derive(Debug)]
pub struct BayesScorer {
    data: Arc<ObsDataset>,
    config: ScoreConfig,
    cache: RwLock<HashMap<(usize, u64), f64>>,
}

impl BayesScorer {
    pub fn new(data: Arc<ObsDataset>, config: ScoreConfig) -> Result<Self, CausalError> {
        data.validate()?;
        config.validate()?;
        if data.num_vars() > 8 {
            return Err(CausalError::DimensionTooLarge {
                d: data.num_vars(),
                max: 8,
            });
        }
        Ok(Self {
            data,
            config,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn data(&self) -> &ObsDataset {
        &self.data
    }

    pub fn config(&self) -> &ScoreConfig {
        &self.config
    }

    pub fn num_vars(&self) -> usize {
        self.data.num_vars()
    }

    /// `log P(X_node | X_parents)` over the rows where `node` was not
    /// intervened on. `parents` is a bitmask over variables.
    pub fn family_score(&self, node: usize, parents: u64) -> f64 {
        if let Some(&v) = self.cache.read().expect("cache lock").get(&(node, parents)) {
            return v;
        }
        let v = match &self.data.values {
            DataValues::Continuous(rows) => self.gaussian_family(rows, node, parents),
            DataValues::Discrete { rows, arities } => self.dirichlet_family(rows, arities, node, parents),
        };
        self.cache.write().expect("cache lock").insert((node, parents), v);
        v
    }

    fn kept_rows(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.data.num_rows()).filter(move |&r| self.data.intervened[r] != Some(node))
    }

    fn gaussian_family(&self, rows: &[Vec<f64>], node: usize, parents: u64) -> f64 {
        let pa: Vec<usize> = (0..self.num_vars()).filter(|&j| parents >> j & 1 == 1).collect();
        let kept: Vec<usize> = self.kept_rows(node).collect();
        let n = kept.len();
        if n == 0 {
            return 0.0;
        }
        let s2 = self.config.noise_var;
        let c = self.config.weight_var / s2;
        let y = DVector::from_iterator(n, kept.iter().map(|&r| rows[r][node]));
        let yy = y.dot(&y);
        let (log_det, quad) = if pa.is_empty() {
            (0.0, yy)
        } else {
            // y ~ N(0, σ²(I + c XXᵀ)); reduce to the k×k system I + c XᵀX.
            let x = DMatrix::from_fn(n, pa.len(), |i, j| rows[kept[i]][pa[j]]);
            let xt = x.transpose();
            let a = DMatrix::identity(pa.len(), pa.len()) + (&xt * &x) * c;
            let chol = a.cholesky().expect("I + cXᵀX is positive definite");
            let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let xty = &xt * &y;
            let sol = chol.solve(&xty);
            (log_det, yy - c * xty.dot(&sol))
        };
        -0.5 * (n as f64 * (2.0 * PI * s2).ln() + log_det + quad / s2)
    }

    fn dirichlet_family(&self, rows: &[Vec<usize>], arities: &[usize], node: usize, parents: u64) -> f64 {
        let pa: Vec<usize> = (0..self.num_vars()).filter(|&j| parents >> j & 1 == 1).collect();
        let r = arities[node];
        let q: usize = pa.iter().map(|&j| arities[j]).product();
        let mut counts = vec![0usize; q * r];
        for row in self.kept_rows(node) {
            let mut cfg = 0;
            for &j in &pa {
                cfg = cfg * arities[j] + rows[row][j];
            }
            counts[cfg * r + rows[row][node]] += 1;
        }
        let a = self.config.alpha;
        let ra = r as f64 * a;
        let mut total = 0.0;
        for cell in counts.chunks(r) {
            let n_j: usize = cell.iter().sum();
            if n_j == 0 {
                continue;
            }
            total += ln_gamma(ra) - ln_gamma(ra + n_j as f64);
            for &n_jk in cell {
                total += ln_gamma(a + n_jk as f64) - ln_gamma(a);
            }
        }
        total
    }

    /// `log P(D | G)`.
    pub fn log_marginal_likelihood(&self, graph: &DagState) -> f64 {
        let d = self.num_vars();
        (0..d)
            .map(|i| {
                let mut mask = 0u64;
                for p in graph.parents_of(i, d) {
                    mask |= 1 << p;
                }
                self.family_score(i, mask)
            })
            .sum()
    }

    /// `log P(D | G) + log P(G)`, unnormalized.
    pub fn log_joint(&self, graph: &DagState) -> f64 {
        self.log_marginal_likelihood(graph) + graph_log_prior(graph, self.config.lambda)
    }

    pub fn cached_families(&self) -> usize {
        self.cache.read().expect("cache lock").len()
    }
}

impl GraphScorer for BayesScorer {
    fn log_score(&self, state: &DagState, _d: usize) -> f64 {
        self.log_joint(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn discrete(rows: Vec<Vec<usize>>) -> Arc<ObsDataset> {
        Arc::new(ObsDataset::discrete(vec!["A".into(), "B".into()], rows, vec![2, 2]).unwrap())
    }

    #[test]
    fn dirichlet_root_matches_gamma_ratio() {
        // Three rows of A: counts (2, 1), α = 1: Γ(2)/Γ(5)·Γ(3)Γ(2) = 2/24.
        let s = BayesScorer::new(discrete(vec![vec![0, 0], vec![0, 1], vec![1, 1]]), ScoreConfig::default()).unwrap();
        assert!((s.family_score(0, 0) - (2.0f64 / 24.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn dirichlet_with_parent_splits_counts() {
        // B | A: A=0 rows have B = (0, 1), A=1 row has B = 1.
        let s = BayesScorer::new(discrete(vec![vec![0, 0], vec![0, 1], vec![1, 1]]), ScoreConfig::default()).unwrap();
        let expected = (1.0f64 / 6.0).ln() + (1.0f64 / 2.0).ln();
        assert!((s.family_score(1, 0b01) - expected).abs() < 1e-12);
    }

    #[test]
    fn intervened_rows_drop_their_own_family() {
        let base = ObsDataset::discrete(
            vec!["A".into(), "B".into()],
            vec![vec![0, 0], vec![1, 1]],
            vec![2, 2],
        )
        .unwrap();
        let tagged = base.clone().with_interventions(vec![None, Some(1)]).unwrap();
        let s = BayesScorer::new(Arc::new(tagged), ScoreConfig::default()).unwrap();
        let only_first = BayesScorer::new(
            Arc::new(ObsDataset::discrete(vec!["A".into(), "B".into()], vec![vec![0, 0]], vec![2, 2]).unwrap()),
            ScoreConfig::default(),
        )
        .unwrap();
        let full = BayesScorer::new(Arc::new(base), ScoreConfig::default()).unwrap();
        assert_eq!(s.family_score(1, 0b01), only_first.family_score(1, 0b01));
        assert_eq!(s.family_score(0, 0), full.family_score(0, 0));
    }

    #[test]
    fn gaussian_root_is_independent_normal() {
        let ds = ObsDataset::continuous(vec!["A".into()], vec![vec![0.3], vec![-0.2]]).unwrap();
        let s = BayesScorer::new(Arc::new(ds), ScoreConfig::default()).unwrap();
        let lp = |x: f64| -0.5 * ((2.0 * PI * 0.1).ln() + x * x / 0.1);
        assert!((s.family_score(0, 0) - (lp(0.3) + lp(-0.2))).abs() < 1e-12);
    }

    #[test]
    fn gaussian_single_row_with_parent() {
        // One row (x, y): y ~ N(0, σ² + σw² x²).
        let (x, y) = (0.7, -0.4);
        let ds = ObsDataset::continuous(vec!["A".into(), "B".into()], vec![vec![x, y]]).unwrap();
        let s = BayesScorer::new(Arc::new(ds), ScoreConfig::default()).unwrap();
        let v = 0.1 + x * x;
        let expected = -0.5 * ((2.0 * PI * v).ln() + y * y / v);
        assert!((s.family_score(1, 0b01) - expected).abs() < 1e-12);
    }

    #[test]
    fn gaussian_matches_dense_covariance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let ds = super::super::data::linear_gaussian_chain(6, &[0.8, -1.2], 0.5, &mut rng);
        let s = BayesScorer::new(Arc::new(ds.clone()), ScoreConfig::default()).unwrap();
        let DataValues::Continuous(rows) = &ds.values else { unreachable!() };
        let n = rows.len();
        let x = DMatrix::from_fn(n, 2, |i, j| rows[i][j]);
        let y = DVector::from_fn(n, |i, _| rows[i][2]);
        let cov = DMatrix::identity(n, n) * 0.1 + &x * x.transpose();
        let chol = cov.clone().cholesky().unwrap();
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let quad = y.dot(&chol.solve(&y));
        let expected = -0.5 * (n as f64 * (2.0 * PI).ln() + log_det + quad);
        assert!((s.family_score(2, 0b011) - expected).abs() < 1e-9);
    }

    #[test]
    fn score_is_sum_of_families_and_cached() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let ds = super::super::data::linear_gaussian_chain(20, &[1.0, 1.0], 0.3, &mut rng);
        let s = BayesScorer::new(Arc::new(ds), ScoreConfig { lambda: 0.5, ..Default::default() }).unwrap();
        let g = DagState::from_adjacency(0b000_100_010, 3).unwrap();
        let direct = s.family_score(0, 0) + s.family_score(1, 0b001) + s.family_score(2, 0b010);
        assert!((s.log_marginal_likelihood(&g) - direct).abs() < 1e-12);
        assert!((s.log_joint(&g) - (direct - 1.0)).abs() < 1e-12);
        assert_eq!(s.cached_families(), 3);
    }

    #[test]
    fn bad_hyperparameters_are_rejected() {
        let ds = discrete(vec![vec![0, 0]]);
        assert!(BayesScorer::new(ds.clone(), ScoreConfig { noise_var: 0.0, ..Default::default() }).is_err());
        assert!(BayesScorer::new(ds, ScoreConfig { lambda: -1.0, ..Default::default() }).is_err());
    }
}
