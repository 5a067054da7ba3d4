use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParamStore};
use super::NnError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: &mut Array2<f64>) {
        match self {
            Activation::Tanh => x.mapv_inplace(f64::tanh),
            Activation::Relu => x.mapv_inplace(|v| v.max(0.0)),
        }
    }

    /// Derivative expressed through the activation output `h`.
    fn grad_from_output(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Relu => {
                if h > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Records the layer inputs of one forward pass.
#[derive(Debug)]
pub struct Tape {
    layer_inputs: Vec<Array2<f64>>,
    consumed: bool,
}

/// Fully connected network; the output layer is linear.
#[derive(Clone, Debug)]
pub struct Mlp {
    widths: Vec<usize>,
    layers: Vec<(ParamId, ParamId)>,
    activation: Activation,
}

impl Mlp {
    /// Registers weights for `widths = [input, hidden.., output]` under
    /// `name`, drawn uniformly from `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        widths: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(widths.len() >= 2, "an Mlp needs input and output widths");
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (l, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-bound..=bound));
            let b = Array2::from_shape_fn((1, fan_out), |_| rng.gen_range(-bound..=bound));
            let w = store.add(format!("{name}.{l}.weight"), w);
            let b = store.add(format!("{name}.{l}.bias"), b);
            layers.push((w, b));
        }
        Self {
            widths: widths.to_vec(),
            layers,
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// `(weight, bias)` parameter ids per layer.
    pub fn layers(&self) -> &[(ParamId, ParamId)] {
        &self.layers
    }

    fn check_input(&self, input: &ArrayView2<f64>) -> Result<(), NnError> {
        if input.ncols() != self.input_dim() {
            return Err(NnError::ShapeMismatch {
                expected: format!("{} input columns", self.input_dim()),
                got: format!("{}", input.ncols()),
            });
        }
        Ok(())
    }

    fn run(
        &self,
        store: &ParamStore,
        input: ArrayView2<f64>,
        mut record: Option<&mut Vec<Array2<f64>>>,
    ) -> Array2<f64> {
        let mut h = input.to_owned();
        let last = self.layers.len() - 1;
        for (l, &(w, b)) in self.layers.iter().enumerate() {
            let mut z = h.dot(store.value(w));
            z += store.value(b);
            if l < last {
                self.activation.apply(&mut z);
            }
            if let Some(rec) = record.as_deref_mut() {
                rec.push(std::mem::replace(&mut h, z));
            } else {
                h = z;
            }
        }
        h
    }

    /// Batched forward pass (one row per example) that records a tape.
    pub fn forward(
        &self,
        store: &ParamStore,
        input: ArrayView2<f64>,
    ) -> Result<(Array2<f64>, Tape), NnError> {
        self.check_input(&input)?;
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let out = self.run(store, input, Some(&mut layer_inputs));
        Ok((
            out,
            Tape {
                layer_inputs,
                consumed: false,
            },
        ))
    }

    /// Forward pass without recording.
    pub fn predict(&self, store: &ParamStore, input: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        self.check_input(&input)?;
        Ok(self.run(store, input, None))
    }

    /// Accumulates `dL/dθ` into the store's gradients given `dL/d output`,
    /// and returns `dL/d input`.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        tape: &mut Tape,
        output_grad: ArrayView2<f64>,
    ) -> Result<Array2<f64>, NnError> {
        if tape.consumed {
            return Err(NnError::TapeReused);
        }
        let rows = tape.layer_inputs[0].nrows();
        if output_grad.dim() != (rows, self.output_dim()) {
            return Err(NnError::ShapeMismatch {
                expected: format!("({rows}, {})", self.output_dim()),
                got: format!("{:?}", output_grad.dim()),
            });
        }
        tape.consumed = true;
        let mut g = output_grad.to_owned();
        for (l, &(w, b)) in self.layers.iter().enumerate().rev() {
            let x = &tape.layer_inputs[l];
            let dw = x.t().dot(&g);
            *store.grad_mut(w) += &dw;
            let db = g.sum_axis(Axis(0)).insert_axis(Axis(0));
            *store.grad_mut(b) += &db;
            let mut gin = g.dot(&store.value(w).t());
            if l > 0 {
                let act = self.activation;
                ndarray::Zip::from(&mut gin)
                    .and(x)
                    .for_each(|gi, &h| *gi *= act.grad_from_output(h));
            }
            g = gin;
        }
        Ok(g)
    }
}
