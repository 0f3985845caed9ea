use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::{Agent, AgentCheckpoint};
use super::buffer::{ReplayBuffer, Transition};
use super::config::{Algorithm, TrainConfig};
use super::SaacError;
use crate::autodiff::cosine_lr;
use crate::pathtrack::{PathTrackEnv, VehicleState};
use crate::report::fmt_sig;

/// Offset separating evaluation start states from the training stream.
const EVAL_SEED_OFFSET: u64 = 0x5eed_e7a1;

/// Disturbances applied in a robustness sweep: -0.3 to 0.3 in steps of 0.06.
pub fn default_sweep_grid() -> Vec<f64> {
    grid(-0.3, 0.06, 0.3)
}

/// `start, start + step, ...` up to `end` inclusive (within rounding).
pub fn grid(start: f64, step: f64, end: f64) -> Vec<f64> {
    if !(step > 0.0) || end < start {
        return vec![start];
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + step * i as f64).collect()
}

/// Summary of evaluation episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Mean over episodes of the negated accumulated cost.
    pub tar: f64,
    pub pos_err: f64,
    pub head_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: usize,
    pub algo: Algorithm,
    /// Mean critic loss since the previous row.
    pub value_loss: f64,
    /// Mean policy objective since the previous row.
    pub policy_objective: f64,
    pub tar: f64,
    pub pos_err: f64,
    pub head_err: f64,
    pub wall_ms: u64,
}

impl MetricsRow {
    pub fn is_finite(&self) -> bool {
        [self.value_loss, self.policy_objective, self.tar, self.pos_err, self.head_err]
            .iter()
            .all(|v| v.is_finite())
    }
}

pub const METRICS_HEADER: &str = "iteration,algo,value_loss,tar,pos_err,head_err,wall_ms";

/// Metrics as CSV. With `include_timing` false the wall-clock column is
/// zeroed so runs can be compared byte for byte.
pub fn metrics_csv(rows: &[MetricsRow], include_timing: bool) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.iteration,
            r.algo,
            fmt_sig(r.value_loss),
            fmt_sig(r.tar),
            fmt_sig(r.pos_err),
            fmt_sig(r.head_err),
            if include_timing { r.wall_ms } else { 0 }
        );
    }
    out
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics: Vec<MetricsRow>,
    pub agent: Agent,
    /// Networks at the evaluation with the highest TAR.
    pub best: AgentCheckpoint,
    pub best_tar: f64,
    pub transitions_collected: usize,
}

/// Deterministic-policy evaluation: `episodes` runs of `steps` each from
/// fixed start states, with a constant lateral-velocity disturbance `dist`.
pub fn evaluate(
    agent: &Agent,
    env: &PathTrackEnv,
    episodes: usize,
    steps: usize,
    seed: u64,
    dist: f64,
) -> Result<EvalResult, SaacError> {
    let mut tar = 0.0;
    let mut pos = 0.0;
    let mut head = 0.0;
    for ep in 0..episodes {
        let start = env.reset_seeded(seed.wrapping_add(EVAL_SEED_OFFSET).wrapping_add(ep as u64));
        let mut failure = None;
        let mut policy = |s: &VehicleState| match agent.act(s) {
            Ok(c) => c,
            Err(e) => {
                failure.get_or_insert(e);
                Default::default()
            }
        };
        let mut adv = |_: &VehicleState| dist;
        let traj = env.rollout(start, &mut policy, Some(&mut adv), steps, 1.0)?;
        if let Some(e) = failure {
            return Err(e);
        }
        tar -= traj.total_cost;
        pos += traj.mean_abs_lateral_error();
        head += traj.mean_abs_heading_error();
    }
    let n = episodes.max(1) as f64;
    Ok(EvalResult {
        tar: tar / n,
        pos_err: pos / n,
        head_err: head / n,
    })
}

/// TAR at each disturbance in `grid`.
pub fn robustness_sweep(
    agent: &Agent,
    env: &PathTrackEnv,
    grid: &[f64],
    episodes: usize,
    steps: usize,
    seed: u64,
) -> Result<Vec<(f64, EvalResult)>, SaacError> {
    grid.iter()
        .map(|&d| evaluate(agent, env, episodes, steps, seed, d).map(|r| (d, r)))
        .collect()
}

pub fn sweep_csv(rows: &[(f64, EvalResult)]) -> String {
    let mut out = String::from("disturbance,tar,pos_err,head_err\n");
    for (d, r) in rows {
        let _ = writeln!(out, "{},{},{},{}", fmt_sig(*d), fmt_sig(r.tar), fmt_sig(r.pos_err), fmt_sig(r.head_err));
    }
    out
}

fn collect_episode(
    agent: &Agent,
    env: &PathTrackEnv,
    cfg: &TrainConfig,
    buffer: &mut ReplayBuffer,
    rng: &mut ChaCha8Rng,
) -> Result<(), SaacError> {
    let mut s = env.reset(rng);
    for _ in 0..cfg.episode_steps {
        let c = agent.act_sampled(&s, rng)?;
        let u = if cfg.algorithm.has_adversary() {
            agent.disturb_sampled(&s, rng)?
        } else {
            0.0
        };
        let (next, c, u, cost) = env.step(&s, c, u)?;
        buffer.push(Transition {
            state: s,
            control: c,
            dist: u,
            cost,
            next,
        });
        s = if cfg.restart_lateral_error > 0.0 && next.delta_y.abs() > cfg.restart_lateral_error {
            env.reset(rng)
        } else {
            next
        };
    }
    Ok(())
}

/// Alternates one sampled episode with `updates_per_episode` optimizing
/// iterations until `cfg.iterations` are done, evaluating at iteration 0,
/// every `eval_interval` iterations and at the end.
pub fn train(cfg: &TrainConfig, env: &PathTrackEnv) -> Result<TrainOutcome, SaacError> {
    cfg.validate()?;
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut agent = Agent::new(cfg, &env.bounds, &mut rng)?;
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity);
    let eval = |agent: &Agent| evaluate(agent, env, cfg.eval_episodes, cfg.eval_steps, cfg.seed, 0.0);

    let first = eval(&agent)?;
    let mut metrics = vec![MetricsRow {
        iteration: 0,
        algo: cfg.algorithm,
        value_loss: 0.0,
        policy_objective: 0.0,
        tar: first.tar,
        pos_err: first.pos_err,
        head_err: first.head_err,
        wall_ms: clock.elapsed().as_millis() as u64,
    }];
    let mut best = agent.checkpoint();
    let mut best_tar = first.tar;
    let mut collected = 0usize;
    let (mut loss_acc, mut obj_acc, mut n_acc) = (0.0, 0.0, 0usize);

    let mut iteration = 0usize;
    while iteration < cfg.iterations {
        collect_episode(&agent, env, cfg, &mut buffer, &mut rng)?;
        collected += cfg.episode_steps;
        if buffer.len() < cfg.warmup {
            continue;
        }
        for _ in 0..cfg.updates_per_episode {
            if iteration >= cfg.iterations {
                break;
            }
            let batch: Vec<VehicleState> = buffer
                .sample(cfg.batch_size, &mut rng)
                .into_iter()
                .map(|t| t.state)
                .collect();
            let v_lr = cosine_lr(iteration, cfg.iterations, cfg.value_lr_hi, cfg.value_lr_lo);
            let p_lr = cosine_lr(iteration, cfg.iterations, cfg.policy_lr_hi, cfg.policy_lr_lo);
            let targets = agent.compute_target_value(&batch, env, cfg, &mut rng)?;
            let loss = agent.value_update(&batch, &targets, v_lr)?;
            agent.update_target(cfg.tau)?;
            let step = agent.policy_update(&batch, env, cfg, iteration, p_lr, &mut rng)?;
            loss_acc += loss;
            obj_acc += step.objective;
            n_acc += 1;
            iteration += 1;

            if iteration % cfg.eval_interval == 0 || iteration == cfg.iterations {
                let r = eval(&agent)?;
                let n = n_acc.max(1) as f64;
                let row = MetricsRow {
                    iteration,
                    algo: cfg.algorithm,
                    value_loss: loss_acc / n,
                    policy_objective: obj_acc / n,
                    tar: r.tar,
                    pos_err: r.pos_err,
                    head_err: r.head_err,
                    wall_ms: clock.elapsed().as_millis() as u64,
                };
                if !row.is_finite() {
                    return Err(SaacError::NonFiniteLoss { loss: row.value_loss });
                }
                metrics.push(row);
                (loss_acc, obj_acc, n_acc) = (0.0, 0.0, 0);
                if r.tar > best_tar {
                    best_tar = r.tar;
                    best = agent.checkpoint();
                }
            }
        }
    }
    Ok(TrainOutcome {
        metrics,
        agent,
        best,
        best_tar,
        transitions_collected: collected,
    })
}
