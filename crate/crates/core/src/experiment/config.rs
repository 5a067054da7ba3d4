use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::active::LoopConfig;
use crate::causal::{DataMode, ScoreConfig};
use crate::design::AmortizedMiConfig;
use crate::envs::sequence::SequenceReward;
use crate::envs::{Fragment, FragmentEnv, HypergridReward, MotifLandscape};
use crate::gfn::{ModelConfig, TrainConfig};

/// Complete description of a run. Unknown keys are rejected everywhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// State limit for exact enumeration.
    #[serde(default = "default_cap")]
    pub oracle_cap: usize,
    #[serde(default)]
    pub env: Option<EnvSpec>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub causal: Option<CausalSection>,
    #[serde(default)]
    pub al: Option<AlSection>,
    #[serde(default)]
    pub mi: Option<MiSection>,
}

fn default_cap() -> usize {
    200_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    Hypergrid {
        dims: usize,
        side: usize,
        #[serde(default)]
        reward: HypergridReward,
    },
    Sequence {
        vocab: usize,
        length: usize,
        /// Shortest sequence allowed to stop; defaults to `length`.
        #[serde(default)]
        min_length: Option<usize>,
        #[serde(default = "default_sequence_reward")]
        reward: SequenceReward,
    },
    Fragment {
        #[serde(default = "FragmentEnv::reference_library")]
        library: Vec<Fragment>,
        max_fragments: usize,
        target: f64,
        width: f64,
        #[serde(default = "default_fragment_floor")]
        floor: f64,
    },
    Dag {
        nodes: usize,
    },
}

fn default_sequence_reward() -> SequenceReward {
    SequenceReward::Motifs(MotifLandscape::reference())
}

fn default_fragment_floor() -> f64 {
    1e-3
}

impl EnvSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.into()));
        match self {
            EnvSpec::Hypergrid { dims, side, reward } => {
                if !(1..=8).contains(dims) || !(2..=255).contains(side) {
                    return bad("hypergrid needs 1 ≤ dims ≤ 8 and 2 ≤ side ≤ 255");
                }
                if [reward.r0, reward.r1, reward.r2].iter().any(|r| !r.is_finite() || *r < 0.0) || reward.r0 <= 0.0 {
                    return bad("hypergrid rewards must be non-negative with r0 > 0");
                }
            }
            EnvSpec::Sequence { vocab, length, min_length, reward } => {
                if !(1..=255).contains(vocab) || *length == 0 || *length > 64 {
                    return bad("sequence needs 1 ≤ vocab ≤ 255 and 1 ≤ length ≤ 64");
                }
                if min_length.is_some_and(|m| m > *length) {
                    return bad("min_length exceeds length");
                }
                if let SequenceReward::Motifs(m) = reward {
                    if m.motifs.len() != m.weights.len() || m.motifs.iter().flatten().any(|&t| t as usize >= *vocab) {
                        return bad("motifs must match weights and use tokens below vocab");
                    }
                    if !(m.base > 0.0) {
                        return bad("motif base reward must be positive");
                    }
                }
            }
            EnvSpec::Fragment { library, max_fragments, width, floor, .. } => {
                if library.is_empty() || library.len() > 255 || *max_fragments > 255 {
                    return bad("fragment library must have 1..=255 entries and max_fragments ≤ 255");
                }
                if !(*width > 0.0) || !(*floor > 0.0) {
                    return bad("fragment width and floor must be positive");
                }
            }
            EnvSpec::Dag { nodes } => {
                if !(1..=8).contains(nodes) {
                    return bad("dag needs 1 ≤ nodes ≤ 8");
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// CSV with a header row; see `ObsDataset::from_csv`.
    Csv {
        path: PathBuf,
        mode: DataMode,
        #[serde(default)]
        arities: Option<Vec<usize>>,
    },
    /// Linear-Gaussian chain `X0 → X1 → …` sampled from the run seed.
    Chain {
        rows: usize,
        weights: Vec<f64>,
        noise_std: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CausalSection {
    pub data: DataSource,
    #[serde(default)]
    pub score: ScoreConfig,
    /// Draws from the trained sampler for Monte-Carlo edge marginals.
    #[serde(default = "default_graph_samples")]
    pub samples: usize,
}

fn default_graph_samples() -> usize {
    10_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlSection {
    /// Random candidates labelled before the first round.
    #[serde(default = "default_initial_size")]
    pub initial_size: usize,
    /// Independent repetitions, each with its own initial data.
    #[serde(default = "default_one")]
    pub seeds: usize,
    /// Also run random acquisition from the same initial data per seed.
    #[serde(default)]
    pub baseline: bool,
    #[serde(default, rename = "loop")]
    pub loop_config: LoopConfig,
}

fn default_initial_size() -> usize {
    32
}

fn default_one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiSection {
    /// JSON toy model; the bundled reference model when absent.
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default = "default_outer")]
    pub outer: usize,
    #[serde(default = "default_inner")]
    pub inner: usize,
    #[serde(default)]
    pub amortized: AmortizedMiConfig,
    /// Random models checked for dual-form agreement and coarsening.
    #[serde(default = "default_fuzz")]
    pub fuzz_models: usize,
}

fn default_outer() -> usize {
    10_000
}

fn default_inner() -> usize {
    1_000
}

fn default_fuzz() -> usize {
    100
}

impl Default for MiSection {
    fn default() -> Self {
        toml::from_str("").expect("every field has a default")
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses a file; relative data paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let base = std::path::absolute(base).unwrap_or_else(|_| base.to_path_buf());
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(CausalSection { data: DataSource::Csv { path, .. }, .. }) = &mut cfg.causal {
            resolve(path);
        }
        if let Some(MiSection { model: Some(path), .. }) = &mut cfg.mi {
            resolve(path);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if let Some(env) = &self.env {
            env.validate()?;
        }
        self.training.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        if self.model.hidden.iter().any(|&h| h == 0) {
            return Err(ExperimentError::Config("hidden widths must be positive".into()));
        }
        if let Some(c) = &self.causal {
            c.score.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
            if let DataSource::Chain { weights, noise_std, .. } = &c.data {
                if weights.is_empty() || weights.len() > 7 || !(*noise_std > 0.0) {
                    return Err(ExperimentError::Config("chain needs 1..=7 weights and positive noise".into()));
                }
            }
        }
        if let Some(a) = &self.al {
            a.loop_config.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
            if a.initial_size < 2 || a.seeds == 0 {
                return Err(ExperimentError::Config("al needs initial_size ≥ 2 and seeds ≥ 1".into()));
            }
        }
        if let Some(m) = &self.mi {
            if m.outer < 2 || m.inner == 0 {
                return Err(ExperimentError::Config("mi needs outer ≥ 2 and inner ≥ 1".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_train_config_uses_defaults() {
        let cfg = RunConfig::from_toml("[env]\nkind = \"hypergrid\"\ndims = 2\nside = 8\n").unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.training, TrainConfig::default());
        assert_eq!(cfg.model, ModelConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            "sed = 1\n",
            "[env]\nkind = \"hypergrid\"\ndims = 2\nside = 8\ncolour = 1\n",
            "[training]\nstepz = 3\n",
            "[training.optimizer]\nkind = \"adam\"\nbeta1 = 0.9\nbeta2 = 0.99\neps = 1e-8\nmomentum = 1\n",
            "[al.loop]\nrounds = 2\nextra = true\n",
        ] {
            assert!(matches!(RunConfig::from_toml(text), Err(ExperimentError::Config(_))), "{text}");
        }
    }

    #[test]
    fn invalid_values_are_rejected() {
        for text in [
            "[env]\nkind = \"hypergrid\"\ndims = 0\nside = 8\n",
            "[env]\nkind = \"dag\"\nnodes = 9\n",
            "[training]\nbatch_size = 0\n",
            "[training.explore]\nepsilon = 1.5\n",
        ] {
            assert!(RunConfig::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn toml_round_trip() {
        let text = "seed = 7\n[env]\nkind = \"sequence\"\nvocab = 4\nlength = 8\n[al]\nseeds = 2\nbaseline = true\n[al.loop]\nrounds = 3\n";
        let cfg = RunConfig::from_toml(text).unwrap();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
