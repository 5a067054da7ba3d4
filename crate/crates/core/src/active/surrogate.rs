use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ActiveError;
use crate::nn::{Activation, Optimizer, Regressor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateConfig {
    pub members: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Resample the training set per member; off gives identical members
    /// when their initial seeds coincide.
    pub bootstrap: bool,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            members: 5,
            hidden: vec![64, 64],
            epochs: 100,
            batch_size: 32,
            lr: 3e-3,
            bootstrap: true,
        }
    }
}

/// Bootstrap ensemble: mean prediction and ensemble spread as epistemic
/// uncertainty.
#[derive(Clone, Debug)]
pub struct Surrogate {
    members: Vec<Regressor>,
    /// Mean squared error of the ensemble mean on the training set.
    pub train_mse: f64,
}

impl Surrogate {
    pub fn input_dim(&self) -> usize {
        self.members[0].net().input_dim()
    }

    pub fn members(&self) -> usize {
        self.members.len()
    }

    /// `(μ, σ)` per row of `x`.
    pub fn predict(&self, x: &Array2<f64>) -> Vec<(f64, f64)> {
        let preds: Vec<Array2<f64>> = self
            .members
            .iter()
            .map(|m| m.predict(x.view()).expect("surrogate input width"))
            .collect();
        let k = preds.len() as f64;
        (0..x.nrows())
            .map(|i| {
                let first = preds[0][[i, 0]];
                let mean = first + preds.iter().map(|p| p[[i, 0]] - first).sum::<f64>() / k;
                let var = preds.iter().map(|p| (p[[i, 0]] - mean).powi(2)).sum::<f64>() / k;
                (mean, var.sqrt())
            })
            .collect()
    }

    pub fn predict_one(&self, x: &[f64]) -> (f64, f64) {
        let row = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector");
        self.predict(&row)[0]
    }
}

/// Fits each member on its own bootstrap resample of `(x, y)`.
pub fn fit_surrogate<R: Rng + ?Sized>(
    x: &Array2<f64>,
    y: &[f64],
    config: &SurrogateConfig,
    rng: &mut R,
) -> Result<Surrogate, ActiveError> {
    fit_surrogate_seeded(x, y, config, None, rng)
}

/// As [`fit_surrogate`], but member `k` is seeded from `member_seeds[k]`
/// (cycled) when given.
pub fn fit_surrogate_seeded<R: Rng + ?Sized>(
    x: &Array2<f64>,
    y: &[f64],
    config: &SurrogateConfig,
    member_seeds: Option<&[u64]>,
    rng: &mut R,
) -> Result<Surrogate, ActiveError> {
    use rand::SeedableRng;
    let n = y.len();
    if n < 2 || x.nrows() != n {
        return Err(ActiveError::InsufficientData(n));
    }
    if config.members < 2 || config.batch_size == 0 {
        return Err(ActiveError::Config("surrogate needs at least 2 members and a positive batch".into()));
    }
    let dim = x.ncols();
    let mut members = Vec::with_capacity(config.members);
    for k in 0..config.members {
        let seed = member_seeds.map_or_else(|| rng.gen(), |seeds| seeds[k % seeds.len()]);
        let r = &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut reg = Regressor::new(dim, &config.hidden, 1, Activation::Relu, r);
        let sample: Vec<usize> = if config.bootstrap {
            (0..n).map(|_| r.gen_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let b = config.batch_size.min(n);
        for _ in 0..config.epochs {
            let mut order = sample.clone();
            if config.bootstrap {
                rand::seq::SliceRandom::shuffle(order.as_mut_slice(), r);
            }
            for chunk in order.chunks(b) {
                let xb = x.select(Axis(0), chunk);
                let yb = Array2::from_shape_fn((chunk.len(), 1), |(i, _)| y[chunk[i]]);
                reg.fit_step(xb.view(), yb.view(), config.lr, Optimizer::adam())?;
            }
        }
        members.push(reg);
    }
    let mut s = Surrogate { members, train_mse: 0.0 };
    let preds = s.predict(x);
    s.train_mse = preds.iter().zip(y).map(|((m, _), t)| (m - t).powi(2)).sum::<f64>() / n as f64;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn grid(xs: &[f64]) -> Array2<f64> {
        Array2::from_shape_fn((xs.len(), 1), |(i, _)| xs[i])
    }

    #[test]
    fn learns_a_linear_target() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let xs: Vec<f64> = (0..64).map(|i| i as f64 / 63.0 * 2.0 - 1.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.8 * x - 0.3).collect();
        let cfg = SurrogateConfig { epochs: 200, ..Default::default() };
        let s = fit_surrogate(&grid(&xs), &ys, &cfg, &mut rng).unwrap();
        assert!(s.train_mse < 1e-3, "{}", s.train_mse);
        let held: Vec<f64> = (0..20).map(|i| -0.95 + i as f64 * 0.1).collect();
        let preds = s.predict(&grid(&held));
        let rmse = (held.iter().zip(&preds).map(|(x, (m, _))| (m - (0.8 * x - 0.3)).powi(2)).sum::<f64>() / 20.0).sqrt();
        assert!(rmse < 0.05, "{rmse}");
    }

    #[test]
    fn identical_members_have_zero_spread() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let xs = [0.0, 0.5, 1.0];
        let cfg = SurrogateConfig { bootstrap: false, epochs: 20, ..Default::default() };
        let s = fit_surrogate_seeded(&grid(&xs), &[0.0, 1.0, 0.0], &cfg, Some(&[7]), &mut rng).unwrap();
        for (_, sd) in s.predict(&grid(&[-2.0, 0.25, 3.0])) {
            assert_eq!(sd, 0.0);
        }
    }

    #[test]
    fn spread_grows_away_from_data() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..16).map(|i| i as f64 / 15.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x).sin()).collect();
        let s = fit_surrogate(&grid(&xs), &ys, &SurrogateConfig::default(), &mut rng).unwrap();
        let near = s.predict_one(&[0.5]).1;
        let far = s.predict_one(&[4.0]).1;
        assert!(far > near, "far {far} near {near}");
    }

    #[test]
    fn too_little_data() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            fit_surrogate(&grid(&[1.0]), &[1.0], &SurrogateConfig::default(), &mut rng),
            Err(ActiveError::InsufficientData(1))
        ));
    }
}
