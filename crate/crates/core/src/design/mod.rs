//! Mutual-information utilities for experimental design on finite models.
//!
//! All quantities are in nats.

mod amortized;

pub use amortized::{amortized_mi_train, AmortizedMi, AmortizedMiConfig};

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::sample_categorical;

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("design index {0} out of range")]
    UnknownDesign(usize),
    #[error("outcome index {0} out of range")]
    UnknownOutcome(usize),
    #[error("model file: {0}")]
    Io(String),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
}

/// Finite parameter, design and outcome spaces with a likelihood table
/// `likelihood[x][θ][y] = p(y | θ, x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyModel {
    pub prior: Vec<f64>,
    #[serde(default)]
    pub designs: Vec<String>,
    pub likelihood: Vec<Vec<Vec<f64>>>,
}

const TOL: f64 = 1e-12;

impl ToyModel {
    /// Bundled three-hypothesis model with a sharp and a blurred design.
    pub fn reference() -> Self {
        Self::from_json(include_str!("../../fixtures/toy_model.json")).expect("bundled model is valid")
    }

    pub fn new(prior: Vec<f64>, likelihood: Vec<Vec<Vec<f64>>>) -> Result<Self, DesignError> {
        let designs = (0..likelihood.len()).map(|i| format!("x{i}")).collect();
        let m = Self { prior, designs, likelihood };
        m.validate()?;
        Ok(m)
    }

    pub fn n_theta(&self) -> usize {
        self.prior.len()
    }

    pub fn n_designs(&self) -> usize {
        self.likelihood.len()
    }

    pub fn n_outcomes(&self) -> usize {
        self.likelihood.first().and_then(|x| x.first()).map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<(), DesignError> {
        let bad = |m: String| Err(DesignError::Invalid(m));
        check_distribution(&self.prior).map_err(|e| DesignError::Invalid(format!("prior: {e}")))?;
        if self.likelihood.is_empty() {
            return bad("no designs".into());
        }
        if !self.designs.is_empty() && self.designs.len() != self.n_designs() {
            return bad("design names do not match the likelihood table".into());
        }
        let ny = self.n_outcomes();
        if ny == 0 {
            return bad("empty outcome space".into());
        }
        for (x, table) in self.likelihood.iter().enumerate() {
            if table.len() != self.n_theta() {
                return bad(format!("design {x}: {} rows for {} parameters", table.len(), self.n_theta()));
            }
            for (t, row) in table.iter().enumerate() {
                if row.len() != ny {
                    return bad(format!("design {x}, parameter {t}: {} outcomes, expected {ny}", row.len()));
                }
                check_distribution(row).map_err(|e| DesignError::Invalid(format!("design {x}, parameter {t}: {e}")))?;
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, DesignError> {
        let mut m: Self = serde_json::from_str(text).map_err(|e| DesignError::Invalid(e.to_string()))?;
        if m.designs.is_empty() {
            m.designs = (0..m.likelihood.len()).map(|i| format!("x{i}")).collect();
        }
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, DesignError> {
        let text = std::fs::read_to_string(path).map_err(|e| DesignError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    fn check_design(&self, x: usize) -> Result<(), DesignError> {
        if x < self.n_designs() {
            Ok(())
        } else {
            Err(DesignError::UnknownDesign(x))
        }
    }

    /// Predictive `p(y | x) = Σ_θ q(θ) p(y | θ, x)`.
    pub fn marginal(&self, x: usize, belief: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_outcomes()];
        for (q, row) in belief.iter().zip(&self.likelihood[x]) {
            for (o, p) in out.iter_mut().zip(row) {
                *o += q * p;
            }
        }
        out
    }

    /// Same model with outcomes `a` and `b` merged into one (kept at `a`).
    pub fn coarsen(&self, a: usize, b: usize) -> Result<Self, DesignError> {
        let ny = self.n_outcomes();
        if a >= ny || b >= ny || a == b {
            return Err(DesignError::UnknownOutcome(a.max(b)));
        }
        let likelihood = self
            .likelihood
            .iter()
            .map(|table| {
                table
                    .iter()
                    .map(|row| {
                        let mut r = row.clone();
                        r[a] += r[b];
                        r.remove(b);
                        r
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            prior: self.prior.clone(),
            designs: self.designs.clone(),
            likelihood,
        })
    }

    /// Random model with Dirichlet(1) prior and likelihood rows.
    pub fn random<R: Rng + ?Sized>(n_theta: usize, n_designs: usize, n_outcomes: usize, rng: &mut R) -> Self {
        let prior = dirichlet(n_theta, rng);
        let likelihood = (0..n_designs)
            .map(|_| (0..n_theta).map(|_| dirichlet(n_outcomes, rng)).collect())
            .collect();
        Self::new(prior, likelihood).expect("Dirichlet draws are distributions")
    }
}

fn dirichlet<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let g = Gamma::new(1.0, 1.0).expect("valid shape");
    let draws: Vec<f64> = (0..k).map(|_| g.sample(rng) + 1e-300).collect();
    let s: f64 = draws.iter().sum();
    draws.iter().map(|d| d / s).collect()
}

fn check_distribution(p: &[f64]) -> Result<(), String> {
    if p.is_empty() {
        return Err("empty distribution".into());
    }
    if p.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err("entries must be finite and non-negative".into());
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > TOL {
        return Err(format!("sums to {s}"));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiMethod {
    Exact,
    NestedMc,
    Amortized,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    pub value: f64,
    pub method: MiMethod,
    pub stderr: f64,
}

/// Bayes rule `q(θ | x, y) ∝ q(θ) p(y | θ, x)`.
pub fn posterior_update(model: &ToyModel, belief: &[f64], x: usize, y: usize) -> Result<Vec<f64>, DesignError> {
    model.check_design(x)?;
    if y >= model.n_outcomes() {
        return Err(DesignError::UnknownOutcome(y));
    }
    let joint: Vec<f64> = belief.iter().zip(&model.likelihood[x]).map(|(q, row)| q * row[y]).collect();
    let z: f64 = joint.iter().sum();
    if z <= 0.0 {
        return Err(DesignError::Invalid(format!("outcome {y} has zero probability under design {x}")));
    }
    Ok(joint.iter().map(|j| j / z).collect())
}

/// `Σ_θ q(θ) Σ_y p(y|θ,x) log[p(y|θ,x) / p(y|x)]`.
pub fn mi_likelihood_form(model: &ToyModel, x: usize, belief: &[f64]) -> f64 {
    let marg = model.marginal(x, belief);
    let mut total = 0.0;
    for (q, row) in belief.iter().zip(&model.likelihood[x]) {
        for (p, m) in row.iter().zip(&marg) {
            if *q > 0.0 && *p > 0.0 {
                total += q * p * (p / m).ln();
            }
        }
    }
    total
}

/// `Σ_y p(y|x) Σ_θ q(θ|x,y) log[q(θ|x,y) / q(θ)]`.
pub fn mi_posterior_form(model: &ToyModel, x: usize, belief: &[f64]) -> f64 {
    let marg = model.marginal(x, belief);
    let mut total = 0.0;
    for (y, &m) in marg.iter().enumerate() {
        if m <= 0.0 {
            continue;
        }
        for (q, row) in belief.iter().zip(&model.likelihood[x]) {
            let post = q * row[y] / m;
            if post > 0.0 {
                total += m * post * (post / q).ln();
            }
        }
    }
    total
}

/// Exact `I(y; θ | x)` under `belief`.
pub fn exact_mi(model: &ToyModel, x: usize, belief: &[f64]) -> Result<MiEstimate, DesignError> {
    model.check_design(x)?;
    check_distribution(belief).map_err(|e| DesignError::Invalid(format!("belief: {e}")))?;
    if belief.len() != model.n_theta() {
        return Err(DesignError::Invalid("belief has the wrong length".into()));
    }
    Ok(MiEstimate {
        value: mi_likelihood_form(model, x, belief),
        method: MiMethod::Exact,
        stderr: 0.0,
    })
}

/// Nested Monte Carlo estimate with `outer` joint draws and `inner` fresh
/// parameter draws per outer sample for the marginal.
pub fn nested_mc_mi<R: Rng + ?Sized>(
    model: &ToyModel,
    x: usize,
    belief: &[f64],
    outer: usize,
    inner: usize,
    rng: &mut R,
) -> Result<MiEstimate, DesignError> {
    model.check_design(x)?;
    if outer < 2 || inner == 0 {
        return Err(DesignError::Invalid("need outer ≥ 2 and inner ≥ 1 samples".into()));
    }
    let table = &model.likelihood[x];
    let mut terms = Vec::with_capacity(outer);
    for _ in 0..outer {
        let t = sample_categorical(belief, rng);
        let y = sample_categorical(&table[t], rng);
        let mut marg = 0.0;
        for _ in 0..inner {
            marg += table[sample_categorical(belief, rng)][y];
        }
        marg /= inner as f64;
        if marg == 0.0 {
            // Every inner draw ruled y out; fall back to the outer draw.
            marg = table[t][y] / inner as f64;
        }
        terms.push(table[t][y].ln() - marg.ln());
    }
    let n = outer as f64;
    let mean = terms.iter().sum::<f64>() / n;
    let var = terms.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok(MiEstimate {
        value: mean,
        method: MiMethod::NestedMc,
        stderr: (var / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn reference() -> ToyModel {
        ToyModel::from_json(include_str!("../../fixtures/toy_model.json")).unwrap()
    }

    #[test]
    fn uninformative_design_has_zero_mi() {
        let row = vec![0.2, 0.3, 0.5];
        let m = ToyModel::new(vec![0.25, 0.75], vec![vec![row.clone(), row]]).unwrap();
        assert!(exact_mi(&m, 0, &m.prior).unwrap().value.abs() < 1e-15);
    }

    #[test]
    fn bijection_recovers_prior_entropy() {
        let k = 4;
        let lik = (0..k).map(|t| (0..k).map(|y| if y == t { 1.0 } else { 0.0 }).collect()).collect();
        let m = ToyModel::new(vec![1.0 / k as f64; k], vec![lik]).unwrap();
        let mi = exact_mi(&m, 0, &m.prior).unwrap();
        assert!((mi.value - (k as f64).ln()).abs() < 1e-12);
        assert_eq!(mi.stderr, 0.0);
        assert!((mi_posterior_form(&m, 0, &m.prior) - (k as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn reference_forms_agree() {
        let m = reference();
        assert_eq!((m.n_theta(), m.n_designs(), m.n_outcomes()), (3, 2, 4));
        for x in 0..2 {
            let a = mi_likelihood_form(&m, x, &m.prior);
            let b = mi_posterior_form(&m, x, &m.prior);
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn json_round_trip() {
        let m = reference();
        assert_eq!(ToyModel::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn invalid_tables_are_rejected() {
        assert!(ToyModel::new(vec![0.5, 0.6], vec![vec![vec![1.0], vec![1.0]]]).is_err());
        assert!(ToyModel::new(vec![1.0], vec![vec![vec![0.5, 0.4]]]).is_err());
        assert!(ToyModel::new(vec![1.0], vec![vec![vec![0.5, 0.5]], vec![vec![1.0]]]).is_err());
        assert!(ToyModel::from_json("{\"prior\": [1.0], \"likelihood\": [[[1.0]]], \"extra\": 1}").is_err());
    }

    #[test]
    fn posterior_update_matches_renormalization() {
        let m = reference();
        let post = posterior_update(&m, &m.prior, 0, 2).unwrap();
        let raw: Vec<f64> = (0..3).map(|t| m.prior[t] * m.likelihood[0][t][2]).collect();
        let z: f64 = raw.iter().sum();
        for (p, r) in post.iter().zip(&raw) {
            assert!((p - r / z).abs() < 1e-15);
        }
        assert!(matches!(posterior_update(&m, &m.prior, 2, 0), Err(DesignError::UnknownDesign(2))));
    }

    #[test]
    fn nested_mc_on_zero_mi_model() {
        let row = vec![0.5, 0.5];
        let m = ToyModel::new(vec![0.5, 0.5], vec![vec![row.clone(), row]]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let est = nested_mc_mi(&m, 0, &m.prior, 1000, 10, &mut rng).unwrap();
        assert!(est.value.abs() <= 3.0 * est.stderr + 1e-12);
    }

    #[test]
    fn coarsening_shapes() {
        let m = reference().coarsen(1, 3).unwrap();
        assert_eq!(m.n_outcomes(), 3);
        m.validate().unwrap();
        assert!(reference().coarsen(1, 1).is_err());
    }
}
