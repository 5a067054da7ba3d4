use ndarray::Zip;

use super::params::{AdamMoments, ParamStore};
use super::NnError;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl ParamStore {
    /// Applies one update with the accumulated gradients, then zeroes them.
    ///
    /// Fails without touching any parameter if a gradient is non-finite.
    pub fn step(&mut self, lr: f64, opt: Optimizer) -> Result<(), NnError> {
        for (name, g) in self.names.iter().zip(&self.grads) {
            if g.iter().any(|x| !x.is_finite()) {
                return Err(NnError::NonFiniteGradient(name.clone()));
            }
        }
        self.step_count += 1;
        let t = self.step_count as f64;
        for i in 0..self.values.len() {
            let rate = lr * self.lr_scale[i];
            match opt {
                Optimizer::Sgd => {
                    Zip::from(&mut self.values[i])
                        .and(&self.grads[i])
                        .for_each(|p, &g| *p -= rate * g);
                }
                Optimizer::Adam { beta1, beta2, eps } => {
                    let shape = self.values[i].raw_dim();
                    let mom = self.moments[i].get_or_insert_with(|| AdamMoments {
                        m: ndarray::Array2::zeros(shape.clone()),
                        v: ndarray::Array2::zeros(shape),
                    });
                    let c1 = 1.0 - beta1.powf(t);
                    let c2 = 1.0 - beta2.powf(t);
                    Zip::from(&mut self.values[i])
                        .and(&self.grads[i])
                        .and(&mut mom.m)
                        .and(&mut mom.v)
                        .for_each(|p, &g, m, v| {
                            *m = beta1 * *m + (1.0 - beta1) * g;
                            *v = beta2 * *v + (1.0 - beta2) * g * g;
                            let m_hat = *m / c1;
                            let v_hat = *v / c2;
                            *p -= rate * m_hat / (v_hat.sqrt() + eps);
                        });
                }
            }
        }
        self.zero_grad();
        Ok(())
    }
}
