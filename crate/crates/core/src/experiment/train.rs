use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{json, Value};

use super::{component_rng, Artifacts, ExperimentError, RunConfig, StateLabel};
use crate::gfn::{oracle_metrics, train, GfnModel, TrainError};
use crate::oracle::{enumerate_states, exact_log_partition, exact_terminal_distribution, target_distribution, StateGraph};
use crate::sampling::greedy_rollout;
use crate::Environment;

/// Builds the configured environment and evaluates `$body` with it bound
/// to `$env`. DAG environments are scored by the causal section if present.
macro_rules! with_env {
    ($cfg:expr, $env:ident => $body:expr) => {{
        let cfg: &$crate::experiment::RunConfig = $cfg;
        match cfg.env.as_ref() {
            None => Err($crate::experiment::ExperimentError::Config("missing [env] section".into())),
            Some($crate::experiment::EnvSpec::Hypergrid { dims, side, reward }) => {
                let $env = $crate::envs::Hypergrid::new(*dims, *side, reward.clone());
                $body
            }
            Some($crate::experiment::EnvSpec::Sequence { vocab, length, min_length, reward }) => {
                let $env = $crate::envs::SequenceEnv::new(*vocab, *length, min_length.unwrap_or(*length), reward.clone());
                $body
            }
            Some($crate::experiment::EnvSpec::Fragment { library, max_fragments, target, width, floor }) => {
                let $env = $crate::envs::FragmentEnv::new(library.clone(), *max_fragments, *target, *width, *floor);
                $body
            }
            Some($crate::experiment::EnvSpec::Dag { nodes }) => match cfg.causal.as_ref() {
                Some(section) => {
                    let scorer = $crate::experiment::causal::build_scorer(cfg.seed, section)?;
                    if scorer.num_vars() != *nodes {
                        return Err($crate::experiment::ExperimentError::Config(format!(
                            "dag has {nodes} nodes but the data has {} variables",
                            scorer.num_vars()
                        )));
                    }
                    let $env = $crate::envs::DagEnv::new(*nodes, scorer);
                    $body
                }
                None => {
                    let $env = $crate::envs::DagEnv::uniform(*nodes);
                    $body
                }
            },
        }
    }};
}

pub(crate) use with_env;

#[derive(Serialize)]
struct DistributionRow {
    state: String,
    label: String,
    log_reward: f64,
    target: f64,
    learned: f64,
}

pub fn run_train(cfg: &RunConfig, art: &Artifacts) -> Result<Value, ExperimentError> {
    with_env!(cfg, env => train_on(&env, cfg, art))
}

pub fn run_oracle(cfg: &RunConfig, art: &Artifacts) -> Result<Value, ExperimentError> {
    with_env!(cfg, env => oracle_table(&env, cfg, art))
}

/// Trains a GFlowNet with exact evaluation against the enumerated target.
pub fn train_on<E: StateLabel>(env: &E, cfg: &RunConfig, art: &Artifacts) -> Result<Value, ExperimentError> {
    let graph = enumerate_states(env, cfg.oracle_cap)?;
    let mut model = GfnModel::for_env(env, &cfg.model, &mut component_rng(cfg.seed, "model"));
    let records = match train(env, &mut model, &cfg.training, Some(&graph), &mut component_rng(cfg.seed, "train")) {
        Ok(r) => r,
        Err(TrainError::NonFiniteLoss { step, records }) => {
            art.write_metrics(&records)?;
            art.save_checkpoint(&model.store)?;
            return Err(ExperimentError::Diverged { step });
        }
        Err(e) => return Err(e.into()),
    };
    art.write_metrics(&records)?;
    art.save_checkpoint(&model.store)?;

    let learned = exact_terminal_distribution(env, &graph, &model).probs;
    let target = target_distribution(env, &graph);
    let rows: Vec<DistributionRow> = graph
        .terminal_indices()
        .into_iter()
        .map(|i| DistributionRow {
            state: graph.keys[i].to_string(),
            label: env.label(&graph.states[i]),
            log_reward: env.log_reward(&graph.states[i]),
            target: target[i],
            learned: learned[i],
        })
        .collect();
    art.write_csv("distribution.csv", &rows)?;

    let (l1, logz_err) = oracle_metrics(env, &model, &graph, cfg.training.objective);
    let mut summary = json!({
        "states": graph.len(),
        "terminals": rows.len(),
        "steps": cfg.training.steps,
        "final_loss": records.last().map(|r| r.loss),
        "l1_to_target": l1,
        "logz_abs_err": logz_err,
        "log_z": model.log_z(),
        "log_z_exact": exact_log_partition(env, &graph),
    });
    if env.mode_count() > 0 {
        let (learned_mass, target_mass) = mode_mass(env, &graph, &learned, &target);
        let greedy = greedy_rollout(env, &model, 2 * graph.longest_path() + 1)?;
        let greedy_state = greedy.terminal();
        let greedy_modes = usize::from(env.mode_of(greedy_state).is_some());
        summary["mode_mass"] = json!(learned_mass);
        summary["target_mode_mass"] = json!(target_mass);
        summary["modes_found"] = json!(records.last().and_then(|r| r.modes_found));
        summary["min_mode_mass"] = json!(learned_mass.iter().copied().fold(f64::INFINITY, f64::min));
        summary["greedy_state"] = json!(env.label(greedy_state));
        summary["greedy_modes_hit"] = json!(greedy_modes);
    }
    art.say(&format!(
        "trained {} steps: L1 {:.4}, log Z error {}",
        cfg.training.steps,
        l1,
        logz_err.map_or("n/a".to_string(), |e| format!("{e:.4}"))
    ));
    Ok(summary)
}

/// Probability mass on each mode under `learned` and `target`.
pub fn mode_mass<E: Environment>(
    env: &E,
    graph: &StateGraph<E::State>,
    learned: &[f64],
    target: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut a = vec![0.0; env.mode_count()];
    let mut b = vec![0.0; env.mode_count()];
    for (i, s) in graph.states.iter().enumerate() {
        if let Some(m) = env.mode_of(s) {
            a[m] += learned[i];
            b[m] += target[i];
        }
    }
    (a, b)
}

#[derive(Serialize)]
struct OracleRow {
    index: usize,
    state: String,
    label: String,
    terminal: bool,
    log_reward: Option<f64>,
    probability: Option<f64>,
}

/// Enumerates the state space and prints it with the exact target.
pub fn oracle_table<E: StateLabel>(env: &E, cfg: &RunConfig, art: &Artifacts) -> Result<Value, ExperimentError> {
    let graph = enumerate_states(env, cfg.oracle_cap)?;
    let target = target_distribution(env, &graph);
    let log_z = exact_log_partition(env, &graph);
    let stop = env.stop_action();
    let rows: Vec<OracleRow> = (0..graph.len())
        .map(|i| {
            let terminal = graph.masks[i][stop];
            OracleRow {
                index: i,
                state: graph.keys[i].to_string(),
                label: env.label(&graph.states[i]),
                terminal,
                log_reward: terminal.then(|| env.log_reward(&graph.states[i])),
                probability: terminal.then_some(target[i]),
            }
        })
        .collect();
    art.write_csv("oracle.csv", &rows)?;
    art.write_metrics::<BTreeMap<&str, f64>>(&[])?;
    let terminals = rows.iter().filter(|r| r.terminal).count();
    art.say(&format!("{} states, {} terminal, log Z = {:.6}", graph.len(), terminals, log_z));
    art.say(&format!("{:>6}  {:<24} {:>12} {:>12}", "index", "state", "log R", "P(x)"));
    for r in &rows {
        match (r.log_reward, r.probability) {
            (Some(lr), Some(p)) => art.say(&format!("{:>6}  {:<24} {:>12.6} {:>12.6e}", r.index, r.label, lr, p)),
            _ => art.say(&format!("{:>6}  {:<24} {:>12} {:>12}", r.index, r.label, "-", "-")),
        }
    }
    Ok(json!({
        "states": graph.len(),
        "terminals": terminals,
        "log_z": log_z,
        "longest_path": graph.longest_path(),
    }))
}
