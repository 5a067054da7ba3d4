//! Balance objectives.
//!
//! Every objective is a mean of squared log-domain residuals. A residual is
//! a constant plus a signed sum of model quantities (`log P_F`, `log P_B`,
//! `log F`, `log Z`), which lets one routine evaluate all three objectives
//! and back-propagate through them.

use std::collections::HashMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::env::{ActionId, EnvError, Environment, StateKey, Trajectory};
use crate::nn::{NnError, Tape};

use super::model::GfnModel;
use super::TrainError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Detailed balance `P_F(s'|s) F(s) = P_B(s|s') F(s')` on every edge;
    /// stop edges use `log R` as the flow of the terminal.
    Db,
    /// Trajectory balance with a learned `log Z`.
    Tb,
    /// Detailed balance for environments where every state terminates, with
    /// state flows eliminated through `F(s) = R(s) / P_F(stop | s)`.
    TerminatingDb,
}

/// `log[P_F(s'|s) F(s)] − log[P_B(s|s') F(s')]` for the edge `s → s'`.
pub fn db_residual(log_pf: f64, log_flow: f64, log_pb: f64, log_flow_next: f64) -> f64 {
    log_pf + log_flow - log_pb - log_flow_next
}

/// `log Z + Σ log P_F − log R(x) − Σ log P_B`.
pub fn tb_residual(log_z: f64, sum_log_pf: f64, log_reward: f64, sum_log_pb: f64) -> f64 {
    log_z + sum_log_pf - log_reward - sum_log_pb
}

/// `log[R(s) P_F(s'|s) P_F(stop|s')] − log[R(s') P_B(s|s') P_F(stop|s)]`.
pub fn terminating_db_residual(
    log_r: f64,
    log_pf: f64,
    log_pf_stop_next: f64,
    log_r_next: f64,
    log_pb: f64,
    log_pf_stop: f64,
) -> f64 {
    (log_r + log_pf + log_pf_stop_next) - (log_r_next + log_pb + log_pf_stop)
}

#[derive(Clone, Copy, Debug)]
enum Quantity {
    LogPf(usize, ActionId),
    LogPb(usize, ActionId),
    LogFlow(usize),
    LogZ,
}

#[derive(Clone, Debug, Default)]
struct Residual {
    constant: f64,
    terms: Vec<(f64, Quantity)>,
}

/// Unique states referenced by a set of residuals.
struct Batch<'a, E: Environment> {
    states: Vec<&'a E::State>,
    fwd_masks: Vec<Vec<bool>>,
    bwd_masks: Vec<Vec<bool>>,
    index: HashMap<StateKey, usize>,
    residuals: Vec<Residual>,
    learn_pb: bool,
}

impl<'a, E: Environment> Batch<'a, E> {
    fn new(learn_pb: bool) -> Self {
        Self {
            states: Vec::new(),
            fwd_masks: Vec::new(),
            bwd_masks: Vec::new(),
            index: HashMap::new(),
            residuals: Vec::new(),
            learn_pb,
        }
    }

    fn row(&mut self, env: &E, s: &'a E::State) -> usize {
        let key = env.key(s);
        if let Some(&r) = self.index.get(&key) {
            return r;
        }
        let r = self.states.len();
        self.states.push(s);
        self.fwd_masks.push(env.action_mask(s));
        self.bwd_masks.push(env.backward_mask(s));
        self.index.insert(key, r);
        r
    }

    /// Adds `coef · log P_B(action | row)`; folded into the constant when
    /// `P_B` is fixed uniform.
    fn push_log_pb(&self, res: &mut Residual, coef: f64, row: usize, action: ActionId) {
        if self.learn_pb {
            res.terms.push((coef, Quantity::LogPb(row, action)));
        } else {
            let n = self.bwd_masks[row].iter().filter(|&&m| m).count();
            res.constant += coef * -(n as f64).ln();
        }
    }

    fn add_tb(&mut self, env: &E, tau: &'a Trajectory<E::State>) {
        let mut res = Residual {
            constant: -tau.log_reward,
            terms: vec![(1.0, Quantity::LogZ)],
        };
        for (s, &a) in tau.states.iter().zip(&tau.actions) {
            let r = self.row(env, s);
            res.terms.push((1.0, Quantity::LogPf(r, a)));
        }
        for (_, a, next) in tau.transitions() {
            let r = self.row(env, next);
            self.push_log_pb(&mut res, -1.0, r, a);
        }
        self.residuals.push(res);
    }

    fn add_db_edge(&mut self, env: &E, s: &'a E::State, a: ActionId, next: Option<&'a E::State>) {
        let r = self.row(env, s);
        let mut res = Residual::default();
        res.terms.push((1.0, Quantity::LogPf(r, a)));
        res.terms.push((1.0, Quantity::LogFlow(r)));
        match next {
            Some(n) => {
                let rn = self.row(env, n);
                res.terms.push((-1.0, Quantity::LogFlow(rn)));
                self.push_log_pb(&mut res, -1.0, rn, a);
            }
            None => res.constant -= env.log_reward(s),
        }
        self.residuals.push(res);
    }

    fn add_db(&mut self, env: &E, tau: &'a Trajectory<E::State>) {
        for (s, a, next) in tau.transitions() {
            self.add_db_edge(env, s, a, Some(next));
        }
        self.add_db_edge(env, tau.terminal(), env.stop_action(), None);
    }

    fn add_terminating_db_edge(&mut self, env: &E, s: &'a E::State, a: ActionId, next: &'a E::State) {
        let stop = env.stop_action();
        let r = self.row(env, s);
        let rn = self.row(env, next);
        let mut res = Residual {
            constant: env.log_reward(s) - env.log_reward(next),
            terms: vec![
                (1.0, Quantity::LogPf(r, a)),
                (1.0, Quantity::LogPf(rn, stop)),
                (-1.0, Quantity::LogPf(r, stop)),
            ],
        };
        self.push_log_pb(&mut res, -1.0, rn, a);
        self.residuals.push(res);
    }

    fn add_terminating_db(&mut self, env: &E, tau: &'a Trajectory<E::State>) {
        for (s, a, next) in tau.transitions() {
            self.add_terminating_db_edge(env, s, a, next);
        }
    }

    fn add(&mut self, env: &E, tau: &'a Trajectory<E::State>, objective: Objective) {
        match objective {
            Objective::Tb => self.add_tb(env, tau),
            Objective::Db => self.add_db(env, tau),
            Objective::TerminatingDb => self.add_terminating_db(env, tau),
        }
    }

    /// Mean squared residual; with `grad`, also returns the gradient with
    /// respect to the network outputs and `log Z`, plus the tape.
    #[allow(clippy::type_complexity)]
    fn evaluate(
        &self,
        model: &GfnModel,
        env: &E,
        grad: bool,
    ) -> Result<(f64, Option<(Array2<f64>, f64, Tape)>), NnError> {
        if self.residuals.is_empty() {
            return Ok((0.0, None));
        }
        let x = GfnModel::feature_matrix(env, &self.states);
        let (out, tape) = if grad {
            let (o, t) = model.forward_with_tape(x.view())?;
            (o, Some(t))
        } else {
            (model.net().predict(&model.store, x.view())?, None)
        };
        let decoded: Vec<_> = out
            .rows()
            .into_iter()
            .enumerate()
            .map(|(r, row)| model.decode(row.as_slice().unwrap(), &self.fwd_masks[r], &self.bwd_masks[r]))
            .collect();
        let log_z = model.log_z();
        let value = |q: Quantity| match q {
            Quantity::LogPf(r, a) => decoded[r].log_pf[a],
            Quantity::LogPb(r, a) => decoded[r].log_pb[a],
            Quantity::LogFlow(r) => decoded[r].log_flow,
            Quantity::LogZ => log_z,
        };
        let deltas: Vec<f64> = self
            .residuals
            .iter()
            .map(|res| res.constant + res.terms.iter().map(|&(c, q)| c * value(q)).sum::<f64>())
            .collect();
        let k = deltas.len() as f64;
        let loss = deltas.iter().map(|d| d * d).sum::<f64>() / k;
        let Some(tape) = tape else {
            return Ok((loss, None));
        };
        if !loss.is_finite() {
            return Ok((loss, None));
        }
        {
            let n_actions = model.n_actions();
            let flow_col = model.flow_column();
            let pb_off = model.pb_offset();
            let mut g = Array2::<f64>::zeros(out.raw_dim());
            let mut g_log_z = 0.0;
            for (res, &delta) in self.residuals.iter().zip(&deltas) {
                let upstream = 2.0 * delta / k;
                for &(c, q) in &res.terms {
                    let w = c * upstream;
                    match q {
                        Quantity::LogPf(r, a) => {
                            let lp = &decoded[r].log_pf;
                            for j in 0..n_actions {
                                if self.fwd_masks[r][j] {
                                    let ind = if j == a { 1.0 } else { 0.0 };
                                    g[[r, j]] += w * (ind - lp[j].exp());
                                }
                            }
                        }
                        Quantity::LogPb(r, a) => {
                            let lp = &decoded[r].log_pb;
                            for j in 0..n_actions {
                                if self.bwd_masks[r][j] {
                                    let ind = if j == a { 1.0 } else { 0.0 };
                                    g[[r, pb_off + j]] += w * (ind - lp[j].exp());
                                }
                            }
                        }
                        Quantity::LogFlow(r) => g[[r, flow_col]] += w,
                        Quantity::LogZ => g_log_z += w,
                    }
                }
            }
            Ok((loss, Some((g, g_log_z, tape))))
        }
    }
}

/// Mean objective value over a batch of trajectories.
pub fn objective_loss<E: Environment>(
    model: &GfnModel,
    env: &E,
    trajectories: &[Trajectory<E::State>],
    objective: Objective,
) -> Result<f64, NnError> {
    let mut batch = Batch::<E>::new(model.learns_pb());
    for tau in trajectories {
        batch.add(env, tau, objective);
    }
    Ok(batch.evaluate(model, env, false)?.0)
}

/// Mean objective value; gradients are accumulated into `model.store`.
pub fn objective_loss_and_grad<E: Environment>(
    model: &mut GfnModel,
    env: &E,
    trajectories: &[Trajectory<E::State>],
    objective: Objective,
) -> Result<f64, NnError> {
    let mut batch = Batch::<E>::new(model.learns_pb());
    for tau in trajectories {
        batch.add(env, tau, objective);
    }
    let (loss, grads) = batch.evaluate(model, env, true)?;
    if let Some((g, g_log_z, mut tape)) = grads {
        model.backward(&mut tape, g.view())?;
        let id = model.log_z_id();
        model.store.grad_mut(id)[[0, 0]] += g_log_z;
    }
    Ok(loss)
}

/// Worst relative disagreement between the analytic gradient of the batch
/// objective and central differences with step `h`, over the flat parameter
/// indices in `probes`.
pub fn objective_gradient_error<E: Environment>(
    model: &mut GfnModel,
    env: &E,
    trajectories: &[Trajectory<E::State>],
    objective: Objective,
    probes: &[usize],
    h: f64,
) -> Result<f64, NnError> {
    model.store.zero_grad();
    objective_loss_and_grad(model, env, trajectories, objective)?;
    let analytic = model.store.flat_grads();
    model.store.zero_grad();
    let mut probe = model.clone();
    let mut failure = None;
    let err = crate::nn::gradient_check(&mut model.store, &analytic, probes, h, |s| {
        probe.store.copy_from(s);
        objective_loss(&probe, env, trajectories, objective).unwrap_or_else(|e| {
            failure = Some(e);
            f64::NAN
        })
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(err),
    }
}

fn check_edge<E: Environment>(env: &E, s: &E::State, a: ActionId) -> Result<(), EnvError> {
    let mask = env.action_mask(s);
    if a >= mask.len() || !mask[a] {
        return Err(EnvError::MaskedTransition {
            state: env.key(s),
            action: a,
        });
    }
    Ok(())
}

/// Detailed-balance loss on one edge `s --a--> s'` (stop included).
pub fn db_loss<E: Environment>(model: &GfnModel, env: &E, s: &E::State, a: ActionId) -> Result<f64, TrainError> {
    check_edge(env, s, a)?;
    let next = if a == env.stop_action() {
        None
    } else {
        Some(env.apply(s, a)?)
    };
    let mut batch = Batch::<E>::new(model.learns_pb());
    batch.add_db_edge(env, s, a, next.as_ref());
    Ok(batch.evaluate(model, env, false)?.0)
}

/// Trajectory-balance loss on one trajectory.
pub fn tb_loss<E: Environment>(model: &GfnModel, env: &E, tau: &Trajectory<E::State>) -> Result<f64, TrainError> {
    if !tau.log_reward.is_finite() {
        return Err(TrainError::NonFiniteLogReward(tau.log_reward));
    }
    let mut batch = Batch::<E>::new(model.learns_pb());
    batch.add_tb(env, tau);
    Ok(batch.evaluate(model, env, false)?.0)
}

/// Terminating-state detailed-balance loss on one non-stop edge.
pub fn terminating_db_loss<E: Environment>(
    model: &GfnModel,
    env: &E,
    s: &E::State,
    a: ActionId,
) -> Result<f64, TrainError> {
    check_edge(env, s, a)?;
    if a == env.stop_action() {
        return Err(EnvError::MaskedTransition {
            state: env.key(s),
            action: a,
        }
        .into());
    }
    let next = env.apply(s, a)?;
    let mut batch = Batch::<E>::new(model.learns_pb());
    batch.add_terminating_db_edge(env, s, a, &next);
    Ok(batch.evaluate(model, env, false)?.0)
}
