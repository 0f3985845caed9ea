//! Invariants of the actor-critic: target aggregation, the sampled estimator
//! against exact enumeration, optimizer steps, adversary handling and
//! determinism of whole training runs.

use mgsmooth::autodiff::Tensor;
use mgsmooth::bellman::{self, Operator, WlseConfig};
use mgsmooth::pathtrack::{Control, PathMode, PathTrackEnv, VehicleState};
use mgsmooth::saac::{
    metrics_csv, monte_carlo_target, train, Agent, Algorithm, ReplayBuffer, TabularModel, TargetRule, TrainConfig,
    Transition,
};
use mgsmooth::{MarkovGame, TabularPolicy};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

fn agent_and_batch(seed: u64, algorithm: Algorithm, n: usize) -> (Agent, TrainConfig, PathTrackEnv, Vec<VehicleState>) {
    let cfg = TrainConfig {
        algorithm,
        seed,
        ..TrainConfig::desk()
    };
    let env = PathTrackEnv::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agent = Agent::new(&cfg, &env.bounds, &mut rng).unwrap();
    let states = (0..n).map(|_| env.reset(&mut rng)).collect();
    (agent, cfg, env, states)
}

/// A short run that still performs optimizer updates and several evaluations.
fn tiny_config(algorithm: Algorithm, seed: u64) -> TrainConfig {
    TrainConfig {
        algorithm,
        seed,
        iterations: 40,
        eval_interval: 20,
        eval_episodes: 2,
        eval_steps: 30,
        warmup: 150,
        updates_per_episode: 20,
        batch_size: 32,
        k_samples: 4,
        ..TrainConfig::desk()
    }
}

fn protagonist_first_state() -> (MarkovGame, Vec<f64>, Vec<f64>, f64) {
    let game = MarkovGame::two_state_counterexample();
    let pi = TabularPolicy::deterministic(2, &[0, 0]).unwrap();
    let mu = TabularPolicy::new(vec![vec![0.45, 0.55]; 2]).unwrap();
    let cfg = WlseConfig::adversary(10.0).unwrap();
    let (v, _) = bellman::pev_fixed_point(&game, &Operator::Wlse { pi: &pi, mu: &mu, cfg }, None, 1e-12, 10_000).unwrap();
    let v1 = v.get(0);
    (game, vec![v1, v.get(1)], mu.row(0).to_vec(), v1)
}

#[test]
fn sampled_target_matches_enumeration() {
    let (game, values, mu, v1) = protagonist_first_state();
    let model = TabularModel::new(&game, mgsmooth::ValueTable::from_values(values));
    let pi = [1.0, 0.0];
    let exact = model.exact_target(0, &pi, &mu, 10.0).unwrap();
    // At the smoothed fixed point the exact target reproduces the value.
    assert!((exact - v1).abs() < 1e-9);
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mc = model
            .sampled_target(0, &pi, &mu, 1000, TargetRule::Smoothed { rho: 10.0 }, &mut rng)
            .unwrap();
        assert!((mc - exact).abs() <= 0.01 * exact.abs(), "seed {seed}: {mc} vs {exact}");
    }
}

#[test]
fn sampled_mean_target_matches_joint_backup() {
    let (game, values, mu, _) = protagonist_first_state();
    let model = TabularModel::new(&game, mgsmooth::ValueTable::from_values(values));
    let joint: f64 = (0..2).map(|u| mu[u] * model.backup(0, 0, u)).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mc = model.sampled_target(0, &[1.0, 0.0], &mu, 20_000, TargetRule::Mean, &mut rng).unwrap();
    assert!((mc - joint).abs() < 0.02 * joint.abs());
}

proptest! {
    #[test]
    fn smoothed_target_dominates_mean(ys in prop::collection::vec(-100.0f64..100.0, 1..40), rho in 0.01f64..20.0) {
        let s = TargetRule::Smoothed { rho }.aggregate(&ys);
        let m = TargetRule::Mean.aggregate(&ys);
        let max = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(s >= m - 1e-9);
        prop_assert!(s <= max + 1e-9);
    }

    #[test]
    fn smoothed_target_grows_with_rho(ys in prop::collection::vec(-100.0f64..100.0, 1..40), r1 in 0.01f64..10.0, dr in 0.0f64..10.0) {
        let lo = TargetRule::Smoothed { rho: r1 }.aggregate(&ys);
        let hi = TargetRule::Smoothed { rho: r1 + dr }.aggregate(&ys);
        prop_assert!(hi >= lo - 1e-9);
    }

    #[test]
    fn single_and_constant_samples(y in -1e3f64..1e3, k in 1usize..50, rho in 0.01f64..50.0) {
        prop_assert_eq!(monte_carlo_target(1, TargetRule::Smoothed { rho }, || y), y);
        let c = monte_carlo_target(k, TargetRule::Smoothed { rho }, || y);
        prop_assert!((c - y).abs() <= 1e-12 * y.abs().max(1.0));
    }

    #[test]
    fn buffer_keeps_the_latest(capacity in 1usize..50, n in 0usize..200) {
        let mut buf = ReplayBuffer::new(capacity);
        for i in 0..n {
            buf.push(Transition {
                state: VehicleState::nominal(i as f64),
                control: Control::default(),
                dist: 0.0,
                cost: i as f64,
                next: VehicleState::nominal(0.0),
            });
        }
        prop_assert_eq!(buf.len(), n.min(capacity));
        let kept: Vec<f64> = buf.iter_ordered().map(|t| t.cost).collect();
        let expected: Vec<f64> = (n.saturating_sub(capacity)..n).map(|i| i as f64).collect();
        prop_assert_eq!(kept, expected);
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        if n > 0 {
            let lo = n.saturating_sub(capacity) as f64;
            prop_assert!(buf.sample(64, &mut rng).iter().all(|t| t.cost >= lo && t.cost < n as f64));
        }
    }
}

#[test]
fn smoothed_agent_target_dominates_joint_target_on_shared_draws() {
    let (agent, cfg, env, states) = agent_and_batch(5, Algorithm::SaAC, 16);
    let rarl = TrainConfig {
        algorithm: Algorithm::RaRL,
        ..cfg.clone()
    };
    // Both variants consume the random stream identically.
    let a = agent.compute_target_value(&states, &env, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let b = agent.compute_target_value(&states, &env, &rarl, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert!(a.iter().zip(&b).all(|(s, m)| s >= &(m - 1e-9)));
    assert!(a.iter().zip(&b).any(|(s, m)| s > m));
}

#[test]
fn critic_matching_targets_has_zero_loss_and_gradient() {
    let (agent, _, _, states) = agent_and_batch(2, Algorithm::SaAC, 8);
    let targets: Vec<f64> = states.iter().map(|s| agent.value_of(s).unwrap()).collect();
    let (loss, grads) = agent.value_loss_and_grads(&states, &targets).unwrap();
    assert!(loss.abs() < 1e-20);
    assert!(grads.iter().all(|g| g.max_abs() < 1e-9));
}

#[test]
fn critic_step_moves_towards_target() {
    let (mut agent, _, _, states) = agent_and_batch(4, Algorithm::SaAC, 1);
    let target = agent.value_of(&states[0]).unwrap() + 10.0;
    let before = (agent.value_of(&states[0]).unwrap() - target).abs();
    agent.value_update(&states, &[target], 1e-4).unwrap();
    let after = (agent.value_of(&states[0]).unwrap() - target).abs();
    assert!(after < before);
}

#[test]
fn adversary_step_does_not_decrease_objective() {
    let (agent, cfg, env, states) = agent_and_batch(6, Algorithm::SaAC, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (na, nu) = (normal(32, 2, &mut rng), normal(32, 1, &mut rng));
    let g = agent.policy_graph(&states, &env, cfg.gamma, true, &na, &nu).unwrap();
    let before = g.tape.value(g.objective).item();
    let grads = g.tape.backward(g.objective).unwrap();
    let ga = g.adversary.as_ref().unwrap().grads(&grads);
    let mut stepped = agent.clone();
    for (p, d) in stepped.adversary.tensors_mut().into_iter().zip(&ga) {
        for (x, dx) in p.data_mut().iter_mut().zip(d.data()) {
            *x += 1e-4 * dx;
        }
    }
    let g2 = stepped.policy_graph(&states, &env, cfg.gamma, true, &na, &nu).unwrap();
    assert!(g2.tape.value(g2.objective).item() >= before);
}

#[test]
fn zero_learning_rates_leave_parameters_unchanged() {
    let (mut agent, cfg, env, states) = agent_and_batch(8, Algorithm::SaAC, 16);
    let before = agent.checkpoint();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let targets = agent.compute_target_value(&states, &env, &cfg, &mut rng).unwrap();
    agent.value_update(&states, &targets, 0.0).unwrap();
    let step = agent.policy_update(&states, &env, &cfg, 0, 0.0, &mut rng).unwrap();
    assert!(step.adversary_stepped);
    let after = agent.checkpoint();
    assert_eq!(before.value, after.value);
    assert_eq!(before.protagonist, after.protagonist);
    assert_eq!(before.adversary, after.adversary);
}

#[test]
fn adversary_interval_gates_ascent() {
    let (mut agent, cfg, env, states) = agent_and_batch(3, Algorithm::SaAC, 8);
    let cfg = TrainConfig {
        adversary_interval: 3,
        ..cfg
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let stepped: Vec<bool> = (0..6)
        .map(|k| agent.policy_update(&states, &env, &cfg, k, 1e-4, &mut rng).unwrap().adversary_stepped)
        .collect();
    assert_eq!(stepped, [true, false, false, true, false, false]);

    let every = TrainConfig::desk();
    assert_eq!(every.adversary_interval, 1);
    assert!(agent.policy_update(&states, &env, &every, 7, 1e-4, &mut rng).unwrap().adversary_stepped);
}

#[test]
fn no_adversary_training_never_touches_it() {
    let cfg = tiny_config(Algorithm::Adp, 4);
    let env = PathTrackEnv::default();
    let initial = Agent::new(&cfg, &env.bounds, &mut ChaCha8Rng::seed_from_u64(cfg.seed)).unwrap();
    let out = train(&cfg, &env).unwrap();
    assert_eq!(out.agent.adversary, initial.adversary);
    assert_ne!(out.agent.protagonist, initial.protagonist);
}

#[test]
fn training_is_deterministic() {
    let env = PathTrackEnv::default();
    for algo in Algorithm::ALL {
        let cfg = tiny_config(algo, 12);
        let a = train(&cfg, &env).unwrap();
        let b = train(&cfg, &env).unwrap();
        assert_eq!(metrics_csv(&a.metrics, false), metrics_csv(&b.metrics, false));
        assert_eq!(a.agent.checkpoint(), b.agent.checkpoint());
        assert_eq!(a.best, b.best);
        assert_eq!(a.metrics.len(), 3);
        assert!(a.metrics.iter().all(|m| m.is_finite()));
    }
}

#[test]
fn different_seeds_differ() {
    let env = PathTrackEnv::default();
    let a = train(&tiny_config(Algorithm::SaAC, 1), &env).unwrap();
    let b = train(&tiny_config(Algorithm::SaAC, 2), &env).unwrap();
    assert_ne!(a.agent.checkpoint(), b.agent.checkpoint());
}

#[test]
fn checkpoint_round_trip_reproduces_actions() {
    let (agent, _, env, states) = agent_and_batch(10, Algorithm::SaAC, 4);
    let json = serde_json::to_string(&agent.checkpoint()).unwrap();
    let restored = Agent::from_checkpoint(serde_json::from_str(&json).unwrap(), &env.bounds).unwrap();
    for s in &states {
        assert_eq!(agent.act(s).unwrap(), restored.act(s).unwrap());
        assert_eq!(agent.value_of(s).unwrap(), restored.value_of(s).unwrap());
    }
}

#[test]
fn perfect_tracking_on_a_straight_path_costs_nothing() {
    let env = PathTrackEnv::new(Default::default(), Default::default(), PathMode::Straight).unwrap();
    let mut hold = |_: &VehicleState| Control::default();
    let traj = env.rollout(VehicleState::nominal(0.0), &mut hold, None, 150, 1.0).unwrap();
    assert_eq!(traj.total_cost, 0.0);
    assert_eq!(traj.len(), 150);
}
