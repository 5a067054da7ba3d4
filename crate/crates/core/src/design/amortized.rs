use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DesignError, MiEstimate, MiMethod, ToyModel};
use crate::math::sample_categorical;
use crate::nn::{Activation, Optimizer, Regressor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmortizedMiConfig {
    pub hidden: Vec<usize>,
    pub steps: usize,
    /// Joint `(x, θ, y)` draws per step.
    pub batch_size: usize,
    pub lr: f64,
    pub final_lr_fraction: f64,
}

impl Default for AmortizedMiConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32],
            steps: 3000,
            batch_size: 256,
            lr: 1e-2,
            final_lr_fraction: 0.01,
        }
    }
}

/// Network `Î(x)` over one-hot design encodings.
#[derive(Clone, Debug)]
pub struct AmortizedMi {
    reg: Regressor,
    n_designs: usize,
}

impl AmortizedMi {
    pub fn estimate(&self, x: usize) -> Result<MiEstimate, DesignError> {
        if x >= self.n_designs {
            return Err(DesignError::UnknownDesign(x));
        }
        let mut input = Array2::zeros((1, self.n_designs));
        input[[0, x]] = 1.0;
        Ok(MiEstimate {
            value: self.reg.predict(input.view())?[[0, 0]],
            method: MiMethod::Amortized,
            stderr: 0.0,
        })
    }

    pub fn regressor(&self) -> &Regressor {
        &self.reg
    }

    pub fn estimates(&self) -> Vec<f64> {
        (0..self.n_designs).map(|x| self.estimate(x).expect("in range").value).collect()
    }
}

/// Regresses `log[p(y|θ,x) / p(y|x)]` on `x` for joint draws
/// `θ ∼ belief`, `y ∼ p(·|θ,x)`, with `x` uniform over designs. The
/// squared-loss minimizer is the mutual information at each design.
pub fn amortized_mi_train<R: Rng + ?Sized>(
    model: &ToyModel,
    belief: &[f64],
    config: &AmortizedMiConfig,
    rng: &mut R,
) -> Result<AmortizedMi, DesignError> {
    if config.batch_size == 0 {
        return Err(DesignError::Invalid("batch_size must be positive".into()));
    }
    let nx = model.n_designs();
    let marginals: Vec<Vec<f64>> = (0..nx).map(|x| model.marginal(x, belief)).collect();
    let mut reg = Regressor::new(nx, &config.hidden, 1, Activation::Tanh, rng);
    let b = config.batch_size;
    let mut input = Array2::zeros((b, nx));
    let mut target = Array2::zeros((b, 1));
    for step in 0..config.steps {
        input.fill(0.0);
        for i in 0..b {
            let x = rng.gen_range(0..nx);
            let t = sample_categorical(belief, rng);
            let y = sample_categorical(&model.likelihood[x][t], rng);
            input[[i, x]] = 1.0;
            target[[i, 0]] = model.likelihood[x][t][y].ln() - marginals[x][y].ln();
        }
        let frac = step as f64 / config.steps.max(1) as f64;
        let lr = config.lr * config.final_lr_fraction.powf(frac);
        reg.fit_step(input.view(), target.view(), lr, Optimizer::adam())?;
    }
    Ok(AmortizedMi { reg, n_designs: nx })
}
