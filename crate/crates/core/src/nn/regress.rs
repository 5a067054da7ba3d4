use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::{Activation, Mlp, NnError, Optimizer, ParamStore};

/// An MLP with its own parameters, fit by mean squared error.
#[derive(Clone, Debug)]
pub struct Regressor {
    pub store: ParamStore,
    net: Mlp,
}

impl Regressor {
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let mut widths = vec![input_dim];
        widths.extend(hidden);
        widths.push(output_dim);
        let mut store = ParamStore::new();
        let net = Mlp::new(&mut store, "reg", &widths, activation, rng);
        Self { store, net }
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        self.net.predict(&self.store, x)
    }

    /// One optimizer step on `mean ‖f(x) − y‖²` over the batch; returns the
    /// loss before the update.
    pub fn fit_step(
        &mut self,
        x: ArrayView2<f64>,
        y: ArrayView2<f64>,
        lr: f64,
        opt: Optimizer,
    ) -> Result<f64, NnError> {
        let loss = self.loss_and_grad(x, y)?;
        self.store.step(lr, opt)?;
        Ok(loss)
    }

    /// `mean ‖f(x) − y‖²`, with its gradient accumulated into the store.
    pub fn loss_and_grad(&mut self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<f64, NnError> {
        let (out, mut tape) = self.net.forward(&self.store, x)?;
        if out.dim() != y.dim() {
            return Err(NnError::ShapeMismatch {
                expected: format!("{:?}", out.dim()),
                got: format!("{:?}", y.dim()),
            });
        }
        let n = out.nrows().max(1) as f64;
        let diff = &out - &y;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
        let grad = diff * (2.0 / n);
        self.net.backward(&mut self.store, &mut tape, grad.view())?;
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;

    #[test]
    fn fits_a_linear_map() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut reg = Regressor::new(2, &[], 1, Activation::Tanh, &mut rng);
        let x = array![[0.0, 1.0], [1.0, 0.0], [1.0, 1.0], [-1.0, 0.5]];
        let y = x.dot(&array![[2.0], [-1.0]]) + 0.5;
        for _ in 0..3000 {
            reg.fit_step(x.view(), y.view(), 0.05, Optimizer::adam()).unwrap();
        }
        let pred = reg.predict(x.view()).unwrap();
        for (p, t) in pred.iter().zip(y.iter()) {
            assert!((p - t).abs() < 1e-4, "{p} vs {t}");
        }
    }

    #[test]
    fn target_shape_is_checked() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut reg = Regressor::new(2, &[4], 1, Activation::Relu, &mut rng);
        let x = Array2::zeros((3, 2));
        let y = Array2::zeros((2, 1));
        assert!(matches!(reg.fit_step(x.view(), y.view(), 0.1, Optimizer::Sgd), Err(NnError::ShapeMismatch { .. })));
    }
}
