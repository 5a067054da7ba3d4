use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::math::masked_log_softmax;
use crate::nn::{Activation, Mlp, NnError, ParamId, ParamStore, Tape};
use crate::sampling::ForwardPolicy;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Learn `P_B`; otherwise it is fixed uniform over parents.
    pub learn_pb: bool,
    pub init_log_z: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            activation: Activation::Relu,
            learn_pb: false,
            init_log_z: 0.0,
        }
    }
}

/// `P_F`, `P_B`, `log F` and `log Z`.
///
/// One network maps state features to a row laid out as
/// `[forward logits (A) | log F (1) | backward logits (A), if learned]`.
#[derive(Clone, Debug)]
pub struct GfnModel {
    pub store: ParamStore,
    net: Mlp,
    log_z: ParamId,
    n_actions: usize,
    learn_pb: bool,
}

/// Per-state quantities decoded from one network row.
#[derive(Clone, Debug)]
pub struct StateOutputs {
    pub log_pf: Vec<f64>,
    /// Log backward probabilities indexed by the action that led into the
    /// state; `-inf` for actions with no matching parent.
    pub log_pb: Vec<f64>,
    pub log_flow: f64,
}

impl GfnModel {
    pub fn new<R: Rng + ?Sized>(
        feature_dim: usize,
        n_actions: usize,
        config: &ModelConfig,
        rng: &mut R,
    ) -> Self {
        let mut store = ParamStore::new();
        let out = n_actions + 1 + if config.learn_pb { n_actions } else { 0 };
        let mut widths = vec![feature_dim];
        widths.extend(&config.hidden);
        widths.push(out);
        let net = Mlp::new(&mut store, "policy", &widths, config.activation, rng);
        let log_z = store.add("log_z", Array2::from_elem((1, 1), config.init_log_z));
        Self {
            store,
            net,
            log_z,
            n_actions,
            learn_pb: config.learn_pb,
        }
    }

    pub fn for_env<E: Environment, R: Rng + ?Sized>(env: &E, config: &ModelConfig, rng: &mut R) -> Self {
        Self::new(env.feature_dim(), env.action_count(), config, rng)
    }

    pub fn log_z(&self) -> f64 {
        self.store.value(self.log_z)[[0, 0]]
    }

    pub fn set_log_z(&mut self, v: f64) {
        self.store.value_mut(self.log_z)[[0, 0]] = v;
    }

    pub fn log_z_id(&self) -> ParamId {
        self.log_z
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn learns_pb(&self) -> bool {
        self.learn_pb
    }

    pub fn flow_column(&self) -> usize {
        self.n_actions
    }

    pub fn pb_offset(&self) -> usize {
        self.n_actions + 1
    }

    pub(crate) fn feature_matrix<E: Environment>(env: &E, states: &[&E::State]) -> Array2<f64> {
        let dim = env.feature_dim();
        let mut x = Array2::zeros((states.len(), dim));
        for (mut row, s) in x.rows_mut().into_iter().zip(states) {
            env.write_features(s, row.as_slice_mut().expect("standard layout"));
        }
        x
    }

    pub fn raw_outputs<E: Environment>(&self, env: &E, states: &[&E::State]) -> Array2<f64> {
        let x = Self::feature_matrix(env, states);
        self.net.predict(&self.store, x.view()).expect("feature width matches network")
    }

    pub(crate) fn forward_with_tape(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Tape), NnError> {
        self.net.forward(&self.store, x)
    }

    pub(crate) fn backward(&mut self, tape: &mut Tape, grad: ArrayView2<f64>) -> Result<(), NnError> {
        self.net.backward(&mut self.store, tape, grad).map(|_| ())
    }

    /// Decodes one network row given the forward and backward masks.
    pub fn decode(&self, row: &[f64], fwd_mask: &[bool], bwd_mask: &[bool]) -> StateOutputs {
        let a = self.n_actions;
        let log_pf = masked_log_softmax(&row[..a], fwd_mask);
        let log_pb = if !bwd_mask.iter().any(|&m| m) {
            vec![f64::NEG_INFINITY; a]
        } else if self.learn_pb {
            masked_log_softmax(&row[a + 1..2 * a + 1], bwd_mask)
        } else {
            masked_log_softmax(&vec![0.0; a], bwd_mask)
        };
        StateOutputs {
            log_pf,
            log_pb,
            log_flow: row[a],
        }
    }

    pub fn state_outputs<E: Environment>(&self, env: &E, states: &[&E::State]) -> Vec<StateOutputs> {
        let out = self.raw_outputs(env, states);
        states
            .iter()
            .zip(out.rows())
            .map(|(s, row)| {
                self.decode(
                    row.as_slice().expect("standard layout"),
                    &env.action_mask(s),
                    &env.backward_mask(s),
                )
            })
            .collect()
    }
}

impl<E: Environment> ForwardPolicy<E> for GfnModel {
    fn action_log_probs(&self, env: &E, states: &[&E::State]) -> Vec<Vec<f64>> {
        if states.is_empty() {
            return Vec::new();
        }
        let out = self.raw_outputs(env, states);
        let a = self.n_actions;
        states
            .iter()
            .zip(out.rows())
            .map(|(s, row)| {
                let row = row.as_slice().expect("standard layout");
                masked_log_softmax(&row[..a], &env.action_mask(s))
            })
            .collect()
    }
}
