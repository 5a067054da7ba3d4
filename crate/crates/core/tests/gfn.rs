use gfnlab::envs::{DagEnv, Hypergrid, HypergridReward};
use gfnlab::gfn::{
    db_loss, oracle_metrics, tb_loss, terminating_db_residual, train, ExplorationPolicy, GfnModel, ModelConfig,
    Objective, TrainConfig,
};
use gfnlab::oracle::{enumerate_states, enumerate_trajectories, parent_counts};
use gfnlab::sampling::{ForwardPolicy, UniformPolicy};
use gfnlab::Environment;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_model<E: Environment>(env: &E, learn_pb: bool, seed: u64) -> GfnModel {
    let cfg = ModelConfig {
        hidden: vec![16],
        learn_pb,
        init_log_z: 0.3,
        ..ModelConfig::default()
    };
    GfnModel::for_env(env, &cfg, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[test]
fn tb_loss_matches_recomputation_from_step_log_probs() {
    let env = Hypergrid::new(2, 2, HypergridReward::default());
    let g = enumerate_states(&env, 100).unwrap();
    for learn_pb in [false, true] {
        let model = small_model(&env, learn_pb, 3);
        for tau in enumerate_trajectories(&env, &g, 100).unwrap() {
            let refs: Vec<_> = tau.states.iter().collect();
            let out = model.state_outputs(&env, &refs);
            let sum_pf: f64 = out.iter().zip(&tau.actions).map(|(o, &a)| o.log_pf[a]).sum();
            let sum_pb: f64 = out[1..].iter().zip(&tau.actions).map(|(o, &a)| o.log_pb[a]).sum();
            let r = model.log_z() + sum_pf - tau.log_reward - sum_pb;
            let loss = tb_loss(&model, &env, &tau).unwrap();
            assert!((loss - r * r).abs() < 1e-12 * (1.0 + r * r));
        }
    }
}

#[test]
fn db_loss_matches_hand_expansion_on_2x2() {
    let env = Hypergrid::new(2, 2, HypergridReward::default());
    let g = enumerate_states(&env, 100).unwrap();
    let model = small_model(&env, false, 9);
    let stop = env.stop_action();
    for s in &g.states {
        let here = &model.state_outputs(&env, &[s])[0];
        let mask = env.action_mask(s);
        for a in (0..mask.len()).filter(|&a| mask[a]) {
            let r = if a == stop {
                here.log_flow + here.log_pf[stop] - env.log_reward(s)
            } else {
                let next = env.apply(s, a).unwrap();
                let there = &model.state_outputs(&env, &[&next])[0];
                // Uniform backward policy: each cell has at most two parents.
                let n_parents = env.parents(&next).len() as f64;
                assert!((there.log_pb[a] + n_parents.ln()).abs() < 1e-12);
                here.log_flow + here.log_pf[a] - there.log_flow - there.log_pb[a]
            };
            let loss = db_loss(&model, &env, s, a).unwrap();
            assert!((loss - r * r).abs() < 1e-12 * (1.0 + r * r));
        }
    }
}

#[test]
fn single_trajectory_env_with_matching_log_z_has_zero_loss() {
    let reward = HypergridReward {
        r0: 2.5,
        r1: 0.0,
        r2: 0.0,
        ..HypergridReward::default()
    };
    let env = Hypergrid::new(1, 1, reward);
    let g = enumerate_states(&env, 10).unwrap();
    let mut model = small_model(&env, false, 0);
    model.set_log_z(2.5f64.ln());
    let taus = enumerate_trajectories(&env, &g, 10).unwrap();
    assert_eq!(taus.len(), 1);
    assert!(tb_loss(&model, &env, &taus[0]).unwrap() < 1e-24);
}

#[test]
fn uniform_policies_satisfy_terminating_db_on_two_node_dags() {
    let env = DagEnv::uniform(2);
    let g = enumerate_states(&env, 100).unwrap();
    let parents = parent_counts(&g);
    let refs: Vec<_> = g.states.iter().collect();
    let lp = UniformPolicy.action_log_probs(&env, &refs);
    let stop = env.stop_action();
    let mut edges = 0;
    for (u, children) in g.children.iter().enumerate() {
        for &(a, c) in children {
            let r = terminating_db_residual(
                env.log_reward(&g.states[u]),
                lp[u][a],
                lp[c][stop],
                env.log_reward(&g.states[c]),
                -(parents[c] as f64).ln(),
                lp[u][stop],
            );
            assert!(r.abs() < 1e-12);
            edges += 1;
        }
    }
    assert_eq!(edges, 2);
}

#[test]
fn zero_steps_leave_the_model_unchanged() {
    let env = Hypergrid::new(2, 4, HypergridReward::default());
    let g = enumerate_states(&env, 100).unwrap();
    let mut model = small_model(&env, false, 1);
    let before = model.store.flat_values();
    let cfg = TrainConfig {
        steps: 0,
        ..TrainConfig::default()
    };
    let records = train(&env, &mut model, &cfg, Some(&g), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(model.store.flat_values(), before);
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].step, 0);
}

#[test]
fn training_is_bit_reproducible() {
    let env = DagEnv::uniform(3);
    let g = enumerate_states(&env, 100).unwrap();
    let cfg = TrainConfig {
        objective: Objective::Db,
        steps: 50,
        eval_every: 10,
        ..TrainConfig::default()
    };
    let run = || {
        let mut model = small_model(&env, true, 4);
        let records = train(&env, &mut model, &cfg, Some(&g), &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        (model.store.flat_values(), records)
    };
    assert_eq!(run(), run());
}

#[test]
fn pure_exploration_still_converges_on_4x4() {
    let env = Hypergrid::new(2, 4, HypergridReward::default());
    let g = enumerate_states(&env, 100).unwrap();
    let mut model = small_model(&env, false, 2);
    let cfg = TrainConfig {
        steps: 3000,
        lr: 3e-3,
        explore: ExplorationPolicy {
            epsilon: 1.0,
            ..ExplorationPolicy::default()
        },
        eval_every: 3000,
        ..TrainConfig::default()
    };
    train(&env, &mut model, &cfg, Some(&g), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let (l1, err) = oracle_metrics(&env, &model, &g, Objective::Tb);
    assert!(l1 < 0.05, "L1 {l1}");
    assert!(err.unwrap() < 0.05);
}

#[test]
fn terminating_db_recovers_the_uniform_dag_distribution() {
    let env = DagEnv::uniform(3);
    let g = enumerate_states(&env, 100).unwrap();
    let mut model = small_model(&env, false, 5);
    let cfg = TrainConfig {
        objective: Objective::TerminatingDb,
        steps: 3000,
        lr: 3e-3,
        eval_every: 3000,
        ..TrainConfig::default()
    };
    train(&env, &mut model, &cfg, Some(&g), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let (l1, _) = oracle_metrics(&env, &model, &g, Objective::TerminatingDb);
    assert!(l1 < 0.02, "L1 {l1}");
}
