//! Python bindings for the environments, oracles, GFlowNet training,
//! structure-posterior, design and experiment entry points.

#[pyo3::pymodule]
mod gfnlab_py {
    use std::path::PathBuf;
    use std::sync::Arc;

    use gfnlab::causal::{exact_posterior, BayesScorer, ObsDataset, ScoreConfig};
    use gfnlab::envs::{DagEnv, HypergridReward};
    use gfnlab::experiment::{graph_label, run_file, Command};
    use gfnlab::gfn::{oracle_metrics, train, GfnModel, ModelConfig, Objective, TrainConfig};
    use gfnlab::oracle::{enumerate_states, exact_log_partition, exact_terminal_distribution, target_distribution};
    use gfnlab::sampling::sample_trajectories;
    use gfnlab::Environment;
    use pyo3::exceptions::{PyRuntimeError, PyValueError};
    use pyo3::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
        PyValueError::new_err(e.to_string())
    }

    fn runtime_err<E: std::fmt::Display>(e: E) -> PyErr {
        PyRuntimeError::new_err(e.to_string())
    }

    const CAP: usize = 1_000_000;

    /// `dims`-dimensional grid of side `side` with the default four-corner
    /// style reward.
    #[pyclass(frozen)]
    struct Hypergrid {
        inner: gfnlab::envs::Hypergrid,
    }

    #[pymethods]
    impl Hypergrid {
        #[new]
        fn new(dims: usize, side: usize) -> PyResult<Self> {
            if !(1..=8).contains(&dims) || !(2..=255).contains(&side) {
                return Err(PyValueError::new_err("need 1 <= dims <= 8 and 2 <= side <= 255"));
            }
            Ok(Self { inner: gfnlab::envs::Hypergrid::new(dims, side, HypergridReward::default()) })
        }

        fn num_states(&self) -> PyResult<usize> {
            Ok(enumerate_states(&self.inner, CAP).map_err(value_err)?.len())
        }

        fn reward(&self, coords: Vec<u8>) -> PyResult<f64> {
            if coords.len() != self.inner.dims() || coords.iter().any(|&c| c as usize >= self.inner.side()) {
                return Err(PyValueError::new_err("coordinates out of range"));
            }
            Ok(self.inner.log_reward(&self.inner.state(&coords)).exp())
        }

        fn log_partition(&self) -> PyResult<f64> {
            let g = enumerate_states(&self.inner, CAP).map_err(value_err)?;
            Ok(exact_log_partition(&self.inner, &g))
        }

        /// `(coords, R(x)/Z)` for every terminal state.
        fn target(&self) -> PyResult<Vec<(Vec<u8>, f64)>> {
            let g = enumerate_states(&self.inner, CAP).map_err(value_err)?;
            let p = target_distribution(&self.inner, &g);
            Ok(g.terminal_indices().into_iter().map(|i| (g.states[i].coords.clone(), p[i])).collect())
        }

        /// Trains a sampler and returns it.
        #[pyo3(signature = (steps = 2000, objective = "tb", seed = 0, batch_size = 16, lr = 1e-3))]
        fn train(&self, py: Python<'_>, steps: usize, objective: &str, seed: u64, batch_size: usize, lr: f64) -> PyResult<Sampler> {
            let objective = match objective {
                "tb" => Objective::Tb,
                "db" => Objective::Db,
                "terminating_db" => Objective::TerminatingDb,
                other => return Err(PyValueError::new_err(format!("unknown objective {other}"))),
            };
            let cfg = TrainConfig { objective, steps, batch_size, lr, eval_every: steps.max(1), ..TrainConfig::default() };
            let env = self.inner.clone();
            py.detach(move || {
                let graph = enumerate_states(&env, CAP).map_err(value_err)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut model = GfnModel::for_env(&env, &ModelConfig::default(), &mut rng);
                train(&env, &mut model, &cfg, Some(&graph), &mut rng).map_err(runtime_err)?;
                let (l1, _) = oracle_metrics(&env, &model, &graph, objective);
                Ok(Sampler { env, model, l1 })
            })
        }
    }

    /// A trained hypergrid sampler.
    #[pyclass(frozen)]
    struct Sampler {
        env: gfnlab::envs::Hypergrid,
        model: GfnModel,
        l1: f64,
    }

    #[pymethods]
    impl Sampler {
        #[getter]
        fn log_z(&self) -> f64 {
            self.model.log_z()
        }

        /// Exact L1 distance between the sampler and `R/Z`.
        #[getter]
        fn l1_to_target(&self) -> f64 {
            self.l1
        }

        /// `(coords, probability)` of terminating at each state.
        fn distribution(&self) -> PyResult<Vec<(Vec<u8>, f64)>> {
            let g = enumerate_states(&self.env, CAP).map_err(value_err)?;
            let p = exact_terminal_distribution(&self.env, &g, &self.model).probs;
            Ok(g.terminal_indices().into_iter().map(|i| (g.states[i].coords.clone(), p[i])).collect())
        }

        #[pyo3(signature = (n, seed = 0))]
        fn sample(&self, n: usize, seed: u64) -> PyResult<Vec<Vec<u8>>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let max_len = self.env.dims() * self.env.side() + 1;
            let trajs = sample_trajectories(&self.env, &self.model, n, max_len, &mut rng).map_err(runtime_err)?;
            Ok(trajs.iter().map(|t| t.terminal().coords.clone()).collect())
        }
    }

    /// Number of DAGs on `d` labelled nodes, by enumeration.
    #[pyfunction]
    fn dag_state_count(d: usize) -> PyResult<usize> {
        if !(1..=5).contains(&d) {
            return Err(PyValueError::new_err("need 1 <= d <= 5"));
        }
        Ok(enumerate_states(&DagEnv::uniform(d), 100_000).map_err(value_err)?.len())
    }

    /// Exact posterior over DAGs for continuous data under the
    /// linear-Gaussian score, as `(edge list, probability)` pairs.
    #[pyfunction]
    #[pyo3(signature = (rows, noise_var = 0.1, weight_var = 1.0, edge_penalty = 0.0))]
    fn dag_posterior(rows: Vec<Vec<f64>>, noise_var: f64, weight_var: f64, edge_penalty: f64) -> PyResult<Vec<(String, f64)>> {
        let d = rows.first().map_or(0, Vec::len);
        let columns = (0..d).map(|i| ((b'A' + i as u8) as char).to_string()).collect();
        let data = ObsDataset::continuous(columns, rows).map_err(value_err)?;
        let cfg = ScoreConfig { noise_var, weight_var, lambda: edge_penalty, ..ScoreConfig::default() };
        let scorer = BayesScorer::new(Arc::new(data), cfg).map_err(value_err)?;
        let post = exact_posterior(&scorer).map_err(value_err)?;
        Ok(post.graphs.iter().zip(&post.probs).map(|(g, &p)| (graph_label(g, d, None), p)).collect())
    }

    /// Finite design model `p(y | θ, x)` with a prior over `θ`.
    #[pyclass(frozen)]
    struct ToyModel {
        inner: gfnlab::design::ToyModel,
    }

    #[pymethods]
    impl ToyModel {
        #[staticmethod]
        fn reference() -> Self {
            Self { inner: gfnlab::design::ToyModel::reference() }
        }

        #[staticmethod]
        fn from_json(text: &str) -> PyResult<Self> {
            Ok(Self { inner: gfnlab::design::ToyModel::from_json(text).map_err(value_err)? })
        }

        #[getter]
        fn n_designs(&self) -> usize {
            self.inner.n_designs()
        }

        #[getter]
        fn prior(&self) -> Vec<f64> {
            self.inner.prior.clone()
        }

        /// Exact information gain of design `x` under the prior, or `belief`.
        #[pyo3(signature = (x, belief = None))]
        fn exact_mi(&self, x: usize, belief: Option<Vec<f64>>) -> PyResult<f64> {
            let b = belief.unwrap_or_else(|| self.inner.prior.clone());
            Ok(gfnlab::design::exact_mi(&self.inner, x, &b).map_err(value_err)?.value)
        }

        /// `(estimate, standard error)`.
        #[pyo3(signature = (x, outer = 10000, inner = 1000, seed = 0))]
        fn nested_mc_mi(&self, x: usize, outer: usize, inner: usize, seed: u64) -> PyResult<(f64, f64)> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let prior = self.inner.prior.clone();
            let e = gfnlab::design::nested_mc_mi(&self.inner, x, &prior, outer, inner, &mut rng).map_err(value_err)?;
            Ok((e.value, e.stderr))
        }

        fn posterior_update(&self, belief: Vec<f64>, x: usize, y: usize) -> PyResult<Vec<f64>> {
            gfnlab::design::posterior_update(&self.inner, &belief, x, y).map_err(value_err)
        }
    }

    #[pyfunction]
    fn expected_improvement(mean: f64, std: f64, best: f64) -> PyResult<f64> {
        if !(std >= 0.0) {
            return Err(PyValueError::new_err("std must be non-negative"));
        }
        Ok(gfnlab::active::expected_improvement(mean, std, best))
    }

    /// Runs a CLI subcommand and returns the summary as a JSON string.
    #[pyfunction]
    #[pyo3(signature = (command, config, out, seed = None))]
    fn run_experiment(py: Python<'_>, command: &str, config: PathBuf, out: PathBuf, seed: Option<u64>) -> PyResult<String> {
        let command = match command {
            "train" => Command::Train,
            "causal" => Command::Causal,
            "al" => Command::Al,
            "mi" => Command::Mi,
            "oracle" => Command::Oracle,
            other => return Err(PyValueError::new_err(format!("unknown command {other}"))),
        };
        let summary = py.detach(move || run_file(command, &config, seed, &out, true)).map_err(runtime_err)?;
        Ok(summary.to_string())
    }
}
