use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use super::{component_rng, graph_label, Artifacts, CausalSection, DataSource, EnvSpec, ExperimentError, RunConfig};
use crate::causal::{
    edge_marginals, exact_posterior, linear_gaussian_chain, posterior_entropy, BayesScorer, CausalError, EdgeMarginals,
    GraphPosterior, ObsDataset,
};
use crate::envs::DagEnv;
use crate::gfn::{train, GfnModel, TrainError};
use crate::oracle::enumerate_states;

fn causal_err(e: CausalError) -> ExperimentError {
    match e {
        CausalError::DimensionTooLarge { .. } => ExperimentError::OracleCap(e.to_string()),
        CausalError::Malformed(_) | CausalError::ArityMismatch(_) | CausalError::Config(_) => {
            ExperimentError::Config(e.to_string())
        }
        other => ExperimentError::Other(other.to_string()),
    }
}

pub fn load_data(seed: u64, section: &CausalSection) -> Result<ObsDataset, ExperimentError> {
    match &section.data {
        DataSource::Csv { path, mode, arities } => {
            ObsDataset::from_csv(path, *mode, arities.clone()).map_err(causal_err)
        }
        DataSource::Chain { rows, weights, noise_std } => {
            Ok(linear_gaussian_chain(*rows, weights, *noise_std, &mut component_rng(seed, "data")))
        }
    }
}

pub fn build_scorer(seed: u64, section: &CausalSection) -> Result<Arc<BayesScorer>, ExperimentError> {
    let data = load_data(seed, section)?;
    Ok(Arc::new(BayesScorer::new(Arc::new(data), section.score.clone()).map_err(causal_err)?))
}

#[derive(Serialize)]
struct GraphRow {
    graph: String,
    edges: u32,
    exact: f64,
    learned: f64,
    sampled: f64,
}

#[derive(Serialize)]
struct EdgeRow {
    parent: String,
    child: String,
    exact: f64,
    learned: f64,
    sampled: f64,
    sampled_stderr: f64,
}

fn max_gap(a: &EdgeMarginals, b: &EdgeMarginals) -> f64 {
    a.probs
        .iter()
        .flatten()
        .zip(b.probs.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Trains a DAG sampler on the posterior of the configured data and compares
/// it with exact enumeration.
pub fn run_causal(cfg: &RunConfig, art: &Artifacts) -> Result<Value, ExperimentError> {
    let section = cfg.causal.as_ref().ok_or_else(|| ExperimentError::Config("missing [causal] section".into()))?;
    let scorer = build_scorer(cfg.seed, section)?;
    let d = scorer.num_vars();
    match &cfg.env {
        None | Some(EnvSpec::Dag { .. }) => {}
        Some(_) => return Err(ExperimentError::Config("causal runs need a dag environment".into())),
    }
    if let Some(EnvSpec::Dag { nodes }) = &cfg.env {
        if *nodes != d {
            return Err(ExperimentError::Config(format!("dag has {nodes} nodes but the data has {d} variables")));
        }
    }
    let exact = exact_posterior(&scorer).map_err(causal_err)?;
    let env = DagEnv::new(d, scorer.clone());
    let graph = enumerate_states(&env, cfg.oracle_cap)?;

    let mut model = GfnModel::for_env(&env, &cfg.model, &mut component_rng(cfg.seed, "model"));
    let records = match train(&env, &mut model, &cfg.training, Some(&graph), &mut component_rng(cfg.seed, "train")) {
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

    let learned = GraphPosterior::from_model(&env, &model).map_err(causal_err)?;
    let sampled = GraphPosterior::sample_model(&env, &model, section.samples, &mut component_rng(cfg.seed, "samples"))
        .map_err(causal_err)?;
    let names = &scorer.data().columns;
    let rows: Vec<GraphRow> = exact
        .graphs
        .iter()
        .zip(&exact.probs)
        .map(|(g, &p)| GraphRow {
            graph: graph_label(g, d, Some(names)),
            edges: g.edge_count(),
            exact: p,
            learned: learned.prob_of(g),
            sampled: sampled.prob_of(g),
        })
        .collect();
    art.write_csv("posterior.csv", &rows)?;

    let (em_exact, em_learned, em_sampled) = (edge_marginals(&exact), edge_marginals(&learned), edge_marginals(&sampled));
    let mut edges = Vec::new();
    for i in 0..d {
        for j in 0..d {
            if i != j {
                edges.push(EdgeRow {
                    parent: names[i].clone(),
                    child: names[j].clone(),
                    exact: em_exact.probs[i][j],
                    learned: em_learned.probs[i][j],
                    sampled: em_sampled.probs[i][j],
                    sampled_stderr: em_sampled.stderr[i][j],
                });
            }
        }
    }
    art.write_csv("edges.csv", &edges)?;

    let l1 = learned.l1_distance(&exact);
    let gap = max_gap(&em_learned, &em_exact);
    art.say(&format!("{} graphs: L1 {:.4}, edge-marginal gap {:.4}", exact.graphs.len(), l1, gap));
    Ok(json!({
        "nodes": d,
        "rows": scorer.data().num_rows(),
        "graphs": exact.graphs.len(),
        "final_loss": records.last().map(|r| r.loss),
        "l1_to_target": l1,
        "edge_marginal_gap": gap,
        "sampled_l1": sampled.l1_distance(&exact),
        "sampled_edge_marginal_gap": max_gap(&em_sampled, &em_exact),
        "samples": section.samples,
        "exact_entropy": posterior_entropy(&exact),
        "learned_entropy": posterior_entropy(&learned),
    }))
}
