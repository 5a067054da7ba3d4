use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use super::train::with_env;
use super::{component_rng, Artifacts, ExperimentError, RunConfig, StateLabel};
use crate::active::{mode_census, run_bo, AcquisitionMode, ActiveError, Dataset, LoopConfig, RoundLog};
use crate::oracle::enumerate_states;

fn active_err(e: ActiveError) -> ExperimentError {
    match e {
        ActiveError::Config(m) => ExperimentError::Config(m),
        ActiveError::Train(t) => t.into(),
        ActiveError::Env(e) => e.into(),
        other => ExperimentError::Other(other.to_string()),
    }
}

fn mode_name(m: AcquisitionMode) -> &'static str {
    match m {
        AcquisitionMode::Argmax => "argmax",
        AcquisitionMode::GfnAl => "gfn-al",
        AcquisitionMode::Random => "random",
    }
}

#[derive(Serialize)]
struct RoundRow {
    seed: usize,
    mode: &'static str,
    round: usize,
    batch_max: f64,
    dataset_max: f64,
    modes_found: usize,
    dataset_size: usize,
}

#[derive(Serialize)]
struct RoundLine<'a> {
    seed: usize,
    mode: &'static str,
    #[serde(flatten)]
    log: &'a RoundLog,
}

pub fn run_al(cfg: &RunConfig, art: &Artifacts) -> Result<Value, ExperimentError> {
    with_env!(cfg, env => al_on(&env, cfg, art))
}

/// Runs the acquisition loop over `seeds` repetitions, each paired with a
/// random-acquisition baseline from the same initial data when requested.
pub fn al_on<E: StateLabel>(env: &E, cfg: &RunConfig, art: &Artifacts) -> Result<Value, ExperimentError> {
    let section = cfg.al.as_ref().ok_or_else(|| ExperimentError::Config("missing [al] section".into()))?;
    let graph = enumerate_states(env, cfg.oracle_cap)?;
    let pool: Vec<E::State> = graph.terminal_indices().into_iter().map(|i| graph.states[i].clone()).collect();
    let oracle = |s: &E::State| env.log_reward(s).exp();
    let main = section.loop_config.mode;
    let mut modes = vec![main];
    if section.baseline && main != AcquisitionMode::Random {
        modes.push(AcquisitionMode::Random);
    }

    let mut rows = Vec::new();
    let mut lines = String::new();
    let mut per_seed = Vec::new();
    let (mut wins_max, mut wins_modes) = (0usize, 0usize);
    for seed in 0..section.seeds {
        let mut init_rng = component_rng(cfg.seed, &format!("al-init/{seed}"));
        let points: Vec<E::State> =
            (0..section.initial_size).map(|_| pool[init_rng.gen_range(0..pool.len())].clone()).collect();
        let values = points.iter().map(oracle).collect();
        let initial = Dataset { points, values };
        let loop_rng = component_rng(cfg.seed, &format!("al-loop/{seed}"));
        let mut finals = Vec::new();
        for &mode in &modes {
            let loop_cfg = LoopConfig { mode, ..section.loop_config.clone() };
            let out = run_bo(env, oracle, initial.clone(), Some(&pool), &loop_cfg, &mut loop_rng.clone())
                .map_err(active_err)?;
            for log in &out.logs {
                rows.push(RoundRow {
                    seed,
                    mode: mode_name(mode),
                    round: log.round,
                    batch_max: log.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    dataset_max: log.dataset_max,
                    modes_found: log.modes_found,
                    dataset_size: log.dataset_size,
                });
                let line = RoundLine { seed, mode: mode_name(mode), log };
                lines.push_str(&serde_json::to_string(&line).map_err(super::other)?);
                lines.push('\n');
            }
            if let Some(m) = &out.model {
                if mode == main {
                    match seed {
                        0 => art.save_checkpoint(&m.store)?,
                        s => crate::nn::save_checkpoint(&m.store, &art.path(&format!("checkpoint-seed{s}.txt")))
                            .map_err(super::other)?,
                    }
                }
            }
            finals.push((mode, out.data.max(), mode_census(env, &out.data.points)));
        }
        let mut entry = json!({
            "seed": seed,
            "initial_max": initial.max(),
            "initial_modes": mode_census(env, &initial.points),
        });
        for &(mode, max, found) in &finals {
            entry[mode_name(mode)] = json!({ "final_max": max, "modes_found": found });
        }
        if finals.len() == 2 {
            let (a, b) = (&finals[0], &finals[1]);
            wins_max += usize::from(a.1 >= b.1);
            wins_modes += usize::from(a.2 > b.2);
            art.say(&format!(
                "seed {seed}: {} max {:.4} modes {} | random max {:.4} modes {}",
                mode_name(main),
                a.1,
                a.2,
                b.1,
                b.2
            ));
        } else {
            art.say(&format!("seed {seed}: max {:.4} modes {}", finals[0].1, finals[0].2));
        }
        per_seed.push(entry);
    }
    art.write_metrics(&rows)?;
    art.write("rounds.jsonl", lines.as_bytes())?;
    let mut summary = json!({
        "mode": mode_name(main),
        "seeds": section.seeds,
        "rounds": section.loop_config.rounds,
        "batch_size": section.loop_config.batch_size,
        "pool_size": pool.len(),
        "mode_count": env.mode_count(),
        "per_seed": per_seed,
    });
    if modes.len() == 2 {
        summary["wins_max"] = json!(wins_max);
        summary["wins_modes"] = json!(wins_modes);
    }
    Ok(summary)
}
