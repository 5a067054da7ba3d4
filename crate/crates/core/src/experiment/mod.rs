//! Seeded, config-driven runs that write their artifacts to an output
//! directory.
//!
//! Every run writes `config.toml` (the resolved config, re-runnable as is),
//! `metrics.csv` and `metrics.jsonl`, `summary.json` and `timing.json`.
//! Runs that train a network also write `checkpoint.txt`. All files except
//! `timing.json` are a deterministic function of the config.

mod al;
mod causal;
mod config;
mod mi;
mod train;

pub use config::{AlSection, CausalSection, DataSource, EnvSpec, MiSection, RunConfig};

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::env::EnvError;
use crate::envs::{DagEnv, DagState, FragmentEnv, FragmentState, GraphScorer, Hypergrid, HypergridState, SequenceEnv, SequenceState};
use crate::gfn::TrainError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("training diverged at step {step}; last good checkpoint kept")]
    Diverged { step: usize },
    #[error("oracle cap exceeded: {0}")]
    OracleCap(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Other(String),
}

impl ExperimentError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::Diverged { .. } => 3,
            ExperimentError::OracleCap(_) => 4,
            ExperimentError::Io { .. } | ExperimentError::Other(_) => 1,
        }
    }
}

impl From<EnvError> for ExperimentError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::CapExceeded { .. } => ExperimentError::OracleCap(e.to_string()),
            other => ExperimentError::Other(other.to_string()),
        }
    }
}

impl From<TrainError> for ExperimentError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFiniteLoss { step, .. } => ExperimentError::Diverged { step },
            TrainError::Config(m) => ExperimentError::Config(m),
            TrainError::Env(e) => e.into(),
            other => ExperimentError::Other(other.to_string()),
        }
    }
}

fn other<E: std::fmt::Display>(e: E) -> ExperimentError {
    ExperimentError::Other(e.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Train,
    Causal,
    Al,
    Mi,
    Oracle,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Causal => "causal",
            Command::Al => "al",
            Command::Mi => "mi",
            Command::Oracle => "oracle",
        }
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Independent stream for a named component: ChaCha8 keyed by the run seed,
/// on the stream selected by the FNV-1a hash of `name`. Adding components
/// never shifts the streams of existing ones.
pub fn component_rng(seed: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name.as_bytes()));
    rng
}

/// Output directory plus console verbosity.
pub struct Artifacts {
    dir: PathBuf,
    quiet: bool,
}

impl Artifacts {
    pub fn new(dir: &Path, quiet: bool) -> Result<Self, ExperimentError> {
        std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Io { path: dir.to_path_buf(), source })?;
        Ok(Self { dir: dir.to_path_buf(), quiet })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<(), ExperimentError> {
        let path = self.path(name);
        crate::io::write_atomic(&path, bytes).map_err(|source| ExperimentError::Io { path, source })
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), ExperimentError> {
        let mut text = serde_json::to_string_pretty(value).map_err(other)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn write_csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(other)?;
        }
        self.write(name, &w.into_inner().map_err(other)?)
    }

    pub fn write_jsonl<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<(), ExperimentError> {
        let mut text = String::new();
        for r in rows {
            text.push_str(&serde_json::to_string(r).map_err(other)?);
            text.push('\n');
        }
        self.write(name, text.as_bytes())
    }

    /// `metrics.csv` and `metrics.jsonl` from the same rows.
    pub fn write_metrics<T: Serialize>(&self, rows: &[T]) -> Result<(), ExperimentError> {
        self.write_csv("metrics.csv", rows)?;
        self.write_jsonl("metrics.jsonl", rows)
    }

    pub fn save_checkpoint(&self, store: &crate::nn::ParamStore) -> Result<(), ExperimentError> {
        crate::nn::save_checkpoint(store, &self.path("checkpoint.txt")).map_err(other)
    }

    pub fn say(&self, line: &str) {
        if !self.quiet {
            println!("{line}");
        }
    }
}

/// Human-readable state labels for tables.
pub trait StateLabel: crate::Environment {
    fn label(&self, s: &Self::State) -> String;
}

impl StateLabel for Hypergrid {
    fn label(&self, s: &HypergridState) -> String {
        let c: Vec<String> = s.coords.iter().map(|c| c.to_string()).collect();
        format!("({})", c.join(","))
    }
}

impl StateLabel for SequenceEnv {
    fn label(&self, s: &SequenceState) -> String {
        if s.tokens.is_empty() {
            return "-".into();
        }
        s.tokens.iter().map(|t| t.to_string()).collect::<Vec<_>>().join("")
    }
}

impl StateLabel for FragmentEnv {
    fn label(&self, s: &FragmentState) -> String {
        let c: Vec<String> = s.counts.iter().map(|c| c.to_string()).collect();
        format!("[{}]", c.join(" "))
    }
}

impl<S: GraphScorer> StateLabel for DagEnv<S> {
    fn label(&self, s: &DagState) -> String {
        graph_label(s, self.nodes(), None)
    }
}

/// Edge list such as `A->B B->C`, or `empty`.
pub fn graph_label(g: &DagState, d: usize, names: Option<&[String]>) -> String {
    let name = |i: usize| match names {
        Some(n) => n[i].clone(),
        None => default_node_name(i),
    };
    let edges: Vec<String> = g.edges(d).into_iter().map(|(i, j)| format!("{}->{}", name(i), name(j))).collect();
    if edges.is_empty() {
        "empty".into()
    } else {
        edges.join(" ")
    }
}

fn default_node_name(i: usize) -> String {
    if i < 26 {
        ((b'A' + i as u8) as char).to_string()
    } else {
        format!("X{i}")
    }
}

/// Runs `command`, writing artifacts to `out`, and returns the summary.
pub fn run(command: Command, config: &RunConfig, out: &Path, quiet: bool) -> Result<Value, ExperimentError> {
    config.validate()?;
    let art = Artifacts::new(out, quiet)?;
    let snapshot = config.to_toml();
    art.write("config.toml", snapshot.as_bytes())?;
    let start = Instant::now();
    let mut summary = match command {
        Command::Train => train::run_train(config, &art)?,
        Command::Oracle => train::run_oracle(config, &art)?,
        Command::Causal => causal::run_causal(config, &art)?,
        Command::Al => al::run_al(config, &art)?,
        Command::Mi => mi::run_mi(config, &art)?,
    };
    if let Value::Object(map) = &mut summary {
        map.insert("command".into(), command.name().into());
        map.insert("seed".into(), config.seed.into());
        map.insert("run_id".into(), format!("{:016x}", fnv1a(snapshot.as_bytes())).into());
    }
    art.write_json("summary.json", &summary)?;
    art.write_json(
        "timing.json",
        &serde_json::json!({ "wall_clock_seconds": start.elapsed().as_secs_f64() }),
    )?;
    Ok(summary)
}

/// Loads `path`, applies the seed override and runs.
pub fn run_file(command: Command, path: &Path, seed: Option<u64>, out: &Path, quiet: bool) -> Result<Value, ExperimentError> {
    let mut config = RunConfig::load(path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    run(command, &config, out, quiet)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn component_streams_are_independent_and_stable() {
        let a1 = component_rng(7, "model").next_u64();
        let a2 = component_rng(7, "model").next_u64();
        let b = component_rng(7, "train").next_u64();
        let c = component_rng(8, "model").next_u64();
        assert_eq!(a1, a2);
        assert_ne!(a1, b);
        assert_ne!(a1, c);
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(ExperimentError::Config("x".into()).exit_code(), 2);
        assert_eq!(ExperimentError::Diverged { step: 3 }.exit_code(), 3);
        assert_eq!(ExperimentError::from(EnvError::CapExceeded { cap: 1 }).exit_code(), 4);
    }

    #[test]
    fn graph_labels() {
        let g = DagState::from_adjacency(0b100_010, 3).unwrap();
        assert_eq!(graph_label(&DagState::empty(), 3, None), "empty");
        assert_eq!(graph_label(&g, 3, None), "A->B B->C");
    }
}
