use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, TrainConfig};
use super::SaacError;
use crate::autodiff::{
    polyak_update, Activation, Adam, MlpParams, MlpVars, OutputActivation, SquashedGaussianHead, Tape, Tensor, Var,
};
use crate::pathtrack::{
    cost_generic, dynamics_generic, dynamics_step, features_batch, features_generic, reward, split_columns,
    states_tensor, ActionBounds, Control, PathTrackEnv, TapeArith, VehicleState, OBS_DIM, STATE_DIM,
};

/// How sampled one-step backups are collapsed into a value target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetRule {
    /// `(1/rho) log mean exp(rho * y)`.
    Smoothed { rho: f64 },
    Mean,
}

impl TargetRule {
    pub fn for_config(cfg: &TrainConfig) -> Self {
        if cfg.algorithm.smoothed_target() {
            TargetRule::Smoothed { rho: cfg.rho }
        } else {
            TargetRule::Mean
        }
    }

    /// Aggregates a non-empty sample.
    pub fn aggregate(&self, ys: &[f64]) -> f64 {
        let n = ys.len() as f64;
        match *self {
            TargetRule::Mean => ys.iter().sum::<f64>() / n,
            TargetRule::Smoothed { rho } => {
                let m = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let acc: f64 = ys.iter().map(|y| (rho * (y - m)).exp()).sum();
                m + (acc / n).ln() / rho
            }
        }
    }
}

/// Draws `k` backups from `draw` and aggregates them with `rule`.
pub fn monte_carlo_target(k: usize, rule: TargetRule, mut draw: impl FnMut() -> f64) -> f64 {
    let ys: Vec<f64> = (0..k).map(|_| draw()).collect();
    rule.aggregate(&ys)
}

/// Critic, its slow-moving copy, and the two policies with their optimizers.
#[derive(Debug, Clone)]
pub struct Agent {
    pub value: MlpParams,
    pub value_target: MlpParams,
    pub protagonist: MlpParams,
    pub adversary: MlpParams,
    protagonist_head: SquashedGaussianHead,
    adversary_head: SquashedGaussianHead,
    opt_value: Adam,
    opt_protagonist: Adam,
    opt_adversary: Adam,
    value_scale: f64,
}

/// Network parameters only, as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub value: MlpParams,
    pub value_target: MlpParams,
    pub protagonist: MlpParams,
    pub adversary: MlpParams,
    pub value_scale: f64,
}

/// Recorded policy objective, ready for a backward sweep.
pub struct PolicyGraph {
    pub tape: Tape,
    pub objective: Var,
    pub protagonist: MlpVars,
    pub adversary: Option<MlpVars>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyStep {
    /// Batch estimate of `E[r + gamma V(s')]` before the step.
    pub objective: f64,
    pub adversary_stepped: bool,
}

/// Initial bias of the log-std outputs, so early exploration stays moderate.
const INIT_LOG_STD: f64 = -1.0;

/// Sets the log-std half of a policy's output bias.
fn init_log_std(net: &mut MlpParams, dim: usize) {
    if let Some(bias) = net.tensors_mut().pop() {
        for c in dim..2 * dim {
            bias.set(0, c, INIT_LOG_STD);
        }
    }
}

fn normal_tensor<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::from_vec(rows, cols, data).expect("consistent shape")
}

fn one_row(s: &VehicleState) -> Tensor {
    features_batch(std::slice::from_ref(s))
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(cfg: &TrainConfig, bounds: &ActionBounds, rng: &mut R) -> Result<Self, SaacError> {
        let hidden = vec![cfg.hidden_units; cfg.hidden_layers];
        let sizes = |out: usize| {
            let mut s = vec![OBS_DIM];
            s.extend_from_slice(&hidden);
            s.push(out);
            s
        };
        let value = MlpParams::new(&sizes(1), Activation::Gelu, OutputActivation::Linear, rng)?;
        let protagonist = MlpParams::new(&sizes(4), Activation::Gelu, OutputActivation::Linear, rng)?;
        let mut protagonist = protagonist;
        let mut adversary = MlpParams::new(&sizes(2), Activation::Gelu, OutputActivation::Linear, rng)?;
        init_log_std(&mut protagonist, 2);
        init_log_std(&mut adversary, 1);
        Ok(Self {
            value_target: value.clone(),
            value,
            protagonist,
            adversary,
            protagonist_head: SquashedGaussianHead::new(bounds.protagonist_lo(), bounds.protagonist_hi())?,
            adversary_head: SquashedGaussianHead::new(vec![bounds.dist.0], vec![bounds.dist.1])?,
            opt_value: Adam::default(),
            opt_protagonist: Adam::default(),
            opt_adversary: Adam::default(),
            value_scale: cfg.value_scale,
        })
    }

    pub fn checkpoint(&self) -> AgentCheckpoint {
        AgentCheckpoint {
            value: self.value.clone(),
            value_target: self.value_target.clone(),
            protagonist: self.protagonist.clone(),
            adversary: self.adversary.clone(),
            value_scale: self.value_scale,
        }
    }

    /// Rebuilds an agent around saved networks with fresh optimizer state.
    pub fn from_checkpoint(ck: AgentCheckpoint, bounds: &ActionBounds) -> Result<Self, SaacError> {
        for net in [&ck.value, &ck.value_target, &ck.protagonist, &ck.adversary] {
            net.validate()?;
            if net.input_dim() != OBS_DIM {
                return Err(SaacError::Ad(crate::autodiff::AdError::Checkpoint(format!(
                    "network input width {} but observations have {OBS_DIM}",
                    net.input_dim()
                ))));
            }
        }
        let out_ok = ck.value.output_dim() == 1
            && ck.value_target.output_dim() == 1
            && ck.protagonist.output_dim() == 4
            && ck.adversary.output_dim() == 2;
        if !out_ok || !(ck.value_scale > 0.0 && ck.value_scale.is_finite()) {
            return Err(SaacError::Ad(crate::autodiff::AdError::Checkpoint(
                "network output widths do not match the agent layout".into(),
            )));
        }
        Ok(Self {
            value: ck.value,
            value_target: ck.value_target,
            protagonist: ck.protagonist,
            adversary: ck.adversary,
            protagonist_head: SquashedGaussianHead::new(bounds.protagonist_lo(), bounds.protagonist_hi())?,
            adversary_head: SquashedGaussianHead::new(vec![bounds.dist.0], vec![bounds.dist.1])?,
            opt_value: Adam::default(),
            opt_protagonist: Adam::default(),
            opt_adversary: Adam::default(),
            value_scale: ck.value_scale,
        })
    }

    pub fn protagonist_head(&self) -> &SquashedGaussianHead {
        &self.protagonist_head
    }

    /// Fixed multiplier applied to the critic's raw output.
    pub fn value_scale(&self) -> f64 {
        self.value_scale
    }

    pub fn adversary_head(&self) -> &SquashedGaussianHead {
        &self.adversary_head
    }

    /// Zero-noise protagonist action.
    pub fn act(&self, s: &VehicleState) -> Result<Control, SaacError> {
        let out = self.protagonist.forward(&one_row(s))?;
        let (mean, _) = self.protagonist_head.split_output(&out)?;
        let a = self.protagonist_head.deterministic(&mean)?;
        Ok(Control {
            steer: a.get(0, 0),
            accel: a.get(0, 1),
        })
    }

    pub fn act_sampled<R: Rng + ?Sized>(&self, s: &VehicleState, rng: &mut R) -> Result<Control, SaacError> {
        let out = self.protagonist.forward(&one_row(s))?;
        let (mean, logstd) = self.protagonist_head.split_output(&out)?;
        let a = self.protagonist_head.sample(&mean, &logstd, &normal_tensor(1, 2, rng))?;
        Ok(Control {
            steer: a.get(0, 0),
            accel: a.get(0, 1),
        })
    }

    pub fn disturb_sampled<R: Rng + ?Sized>(&self, s: &VehicleState, rng: &mut R) -> Result<f64, SaacError> {
        let out = self.adversary.forward(&one_row(s))?;
        let (mean, logstd) = self.adversary_head.split_output(&out)?;
        Ok(self.adversary_head.sample(&mean, &logstd, &normal_tensor(1, 1, rng))?.item())
    }

    /// Critic estimate for one state.
    pub fn value_of(&self, s: &VehicleState) -> Result<f64, SaacError> {
        Ok(self.value_scale * self.value.forward(&one_row(s))?.item())
    }

    /// Value targets for a batch: `k_samples` model rollouts per state from
    /// the current policies, scored by the target critic and aggregated per
    /// the algorithm's rule. No gradients are recorded.
    pub fn compute_target_value<R: Rng + ?Sized>(
        &self,
        states: &[VehicleState],
        env: &PathTrackEnv,
        cfg: &TrainConfig,
        rng: &mut R,
    ) -> Result<Vec<f64>, SaacError> {
        let b = states.len();
        let k = cfg.k_samples;
        let feats = features_batch(states);
        let (p_mean, p_logstd) = self.protagonist_head.split_output(&self.protagonist.forward(&feats)?)?;
        let adv = if matches!(cfg.algorithm, Algorithm::SaAC | Algorithm::RaRL) {
            Some(self.adversary_head.split_output(&self.adversary.forward(&feats)?)?)
        } else {
            None
        };
        let mut nexts = Vec::with_capacity(b * k);
        let mut costs = Vec::with_capacity(b * k);
        for _ in 0..k {
            let a = self.protagonist_head.sample(&p_mean, &p_logstd, &normal_tensor(b, 2, rng))?;
            let u: Vec<f64> = match (&adv, cfg.algorithm) {
                (Some((m, ls)), _) => self.adversary_head.sample(m, ls, &normal_tensor(b, 1, rng))?.into_data(),
                (None, Algorithm::SaACU) => (0..b)
                    .map(|_| rng.random_range(env.bounds.dist.0..=env.bounds.dist.1))
                    .collect(),
                (None, _) => vec![0.0; b],
            };
            for (i, s) in states.iter().enumerate() {
                let c = Control {
                    steer: a.get(i, 0),
                    accel: a.get(i, 1),
                };
                costs.push(reward(s, c));
                nexts.push(dynamics_step(s, c, u[i], &env.params, env.mode)?);
            }
        }
        let v_next = self.value_target.forward(&features_batch(&nexts))?;
        let rule = TargetRule::for_config(cfg);
        let mut ys = vec![0.0; k];
        let targets = (0..b)
            .map(|i| {
                for (j, y) in ys.iter_mut().enumerate() {
                    let idx = j * b + i;
                    *y = costs[idx] + cfg.gamma * self.value_scale * v_next.data()[idx];
                }
                rule.aggregate(&ys)
            })
            .collect();
        Ok(targets)
    }

    /// Half mean-squared error of the critic against `targets`, with its
    /// parameter gradients.
    pub fn value_loss_and_grads(&self, states: &[VehicleState], targets: &[f64]) -> Result<(f64, Vec<Tensor>), SaacError> {
        let mut tape = Tape::new();
        let vars = self.value.register(&mut tape, true);
        let x = tape.constant(features_batch(states));
        let v = self.value.forward_tape(&mut tape, &vars, x)?;
        let v = tape.affine(v, self.value_scale, 0.0);
        let y = tape.constant(Tensor::col_vector(targets.to_vec()));
        let diff = tape.sub(v, y)?;
        let sq = tape.square(diff);
        let m = tape.mean(sq);
        let loss = tape.affine(m, 0.5, 0.0);
        let g = tape.backward(loss)?;
        Ok((tape.value(loss).item(), vars.grads(&g)))
    }

    /// One Adam step on the critic. Returns the loss before the step.
    pub fn value_update(&mut self, states: &[VehicleState], targets: &[f64], lr: f64) -> Result<f64, SaacError> {
        let (loss, grads) = self.value_loss_and_grads(states, targets)?;
        if !loss.is_finite() {
            return Err(SaacError::NonFiniteLoss { loss });
        }
        self.opt_value.step(&mut self.value.tensors_mut(), &grads, lr)?;
        Ok(loss)
    }

    /// Moves the target critic towards the online one.
    pub fn update_target(&mut self, tau: f64) -> Result<(), SaacError> {
        let online = self.value.tensors();
        polyak_update(&mut self.value_target.tensors_mut(), &online, tau)?;
        Ok(())
    }

    /// Records `mean(r(s, a) + gamma V(p(s, a, u)))` with reparameterized
    /// actions, differentiable in both policies' parameters. The critic enters
    /// as a constant.
    pub fn policy_graph(
        &self,
        states: &[VehicleState],
        env: &PathTrackEnv,
        gamma: f64,
        with_adversary: bool,
        noise_a: &Tensor,
        noise_u: &Tensor,
    ) -> Result<PolicyGraph, SaacError> {
        let b = states.len();
        let mut tape = Tape::new();
        let s = tape.constant(states_tensor(states));
        let cols: [Var; STATE_DIM] = split_columns(&mut tape, s)?;
        let feats = tape.constant(features_batch(states));

        let pv = self.protagonist.register(&mut tape, true);
        let out = self.protagonist.forward_tape(&mut tape, &pv, feats)?;
        let a = self.protagonist_head.sample_from_output(&mut tape, out, noise_a)?;
        let steer = tape.slice_cols(a, 0, 1)?;
        let accel = tape.slice_cols(a, 1, 1)?;

        let (u, av) = if with_adversary {
            let av = self.adversary.register(&mut tape, true);
            let out = self.adversary.forward_tape(&mut tape, &av, feats)?;
            (self.adversary_head.sample_from_output(&mut tape, out, noise_u)?, Some(av))
        } else {
            (tape.constant(Tensor::zeros(b, 1)), None)
        };

        let mut ar = TapeArith { tape: &mut tape };
        let next = dynamics_generic(&mut ar, &env.params, env.mode, cols, steer, accel, u)?;
        let nf = features_generic(&mut ar, next)?;
        let cost = cost_generic(&mut ar, cols, steer, accel)?;
        let nf = tape.concat_cols(&nf)?;
        let vv = self.value.register(&mut tape, false);
        let v_next = self.value.forward_tape(&mut tape, &vv, nf)?;
        let disc = tape.affine(v_next, gamma * self.value_scale, 0.0);
        let total = tape.add(cost, disc)?;
        let objective = tape.mean(total);
        Ok(PolicyGraph {
            tape,
            objective,
            protagonist: pv,
            adversary: av,
        })
    }

    /// Simultaneous descent (protagonist) and ascent (adversary) on the policy
    /// objective. The adversary moves only when `iteration` is a multiple of
    /// the configured interval, and never for ADP.
    #[allow(clippy::too_many_arguments)]
    pub fn policy_update<R: Rng + ?Sized>(
        &mut self,
        states: &[VehicleState],
        env: &PathTrackEnv,
        cfg: &TrainConfig,
        iteration: usize,
        lr: f64,
        rng: &mut R,
    ) -> Result<PolicyStep, SaacError> {
        let b = states.len();
        let noise_a = normal_tensor(b, 2, rng);
        let noise_u = normal_tensor(b, 1, rng);
        let with_adv = cfg.algorithm.has_adversary();
        let g = self.policy_graph(states, env, cfg.gamma, with_adv, &noise_a, &noise_u)?;
        let objective = g.tape.value(g.objective).item();
        if !objective.is_finite() {
            return Err(SaacError::NonFiniteLoss { loss: objective });
        }
        let grads = g.tape.backward(g.objective)?;
        let gp = g.protagonist.grads(&grads);
        if gp.iter().any(|t| !t.is_finite()) {
            return Err(SaacError::NonFiniteGradient { network: "protagonist" });
        }
        let step_adv = with_adv && iteration % cfg.adversary_interval == 0;
        let ga = match (&g.adversary, step_adv) {
            (Some(av), true) => {
                let ga: Vec<Tensor> = av.grads(&grads).into_iter().map(|t| t.map(|x| -x)).collect();
                if ga.iter().any(|t| !t.is_finite()) {
                    return Err(SaacError::NonFiniteGradient { network: "adversary" });
                }
                Some(ga)
            }
            _ => None,
        };
        self.opt_protagonist.step(&mut self.protagonist.tensors_mut(), &gp, lr)?;
        if let Some(ga) = &ga {
            self.opt_adversary.step(&mut self.adversary.tensors_mut(), ga, lr)?;
        }
        Ok(PolicyStep {
            objective,
            adversary_stepped: ga.is_some(),
        })
    }
}
