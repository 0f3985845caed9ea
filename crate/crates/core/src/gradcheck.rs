//! Central finite-difference checks for every recorded gradient path: tape
//! primitives, MLPs, the squashed-Gaussian head, the vehicle model, and the
//! critic and policy objectives used in training.
//!
//! Each check compares reverse-mode adjoints against `(f(x+h) - f(x-h)) / 2h`
//! computed with the plain (unrecorded) forward code wherever one exists, so
//! the oracle shares as little code with the tape as possible.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Activation, AdError, MlpParams, OutputActivation, SquashedGaussianHead, Tape, Tensor, Var};
use crate::pathtrack::{
    dynamics_generic, dynamics_step, features_batch, reward, Control, PathError, PathMode, PathTrackEnv, TapeArith,
    VehicleParams, VehicleState, STATE_DIM,
};
use crate::report::fmt_sig;
use crate::saac::{Agent, SaacError, TrainConfig};

/// Finite-difference step.
pub const STEP: f64 = 1e-5;
/// Tolerance for single tape operations and the vehicle model.
pub const PRIMITIVE_TOL: f64 = 1e-5;
/// Tolerance for composed networks and objectives.
pub const COMPOSITE_TOL: f64 = 1e-4;
/// Gradient magnitudes below this are compared on an absolute scale, since
/// round-off in the difference quotient does not shrink with the gradient.
pub const SCALE_FLOOR: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum GradcheckError {
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error(transparent)]
    Model(#[from] PathError),
    #[error(transparent)]
    Training(#[from] SaacError),
}

/// `|a - n| / max(|a|, |n|, SCALE_FLOOR)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(SCALE_FLOOR)
}

/// Outcome of one family of checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub cases: usize,
    /// Number of gradient entries compared.
    pub entries: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err.is_finite() && self.max_rel_err < self.tolerance
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub checks: Vec<CheckResult>,
}

impl GradcheckReport {
    pub fn all_passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(CheckResult::passed)
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,cases,entries,max_rel_err,tolerance,passed\n");
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                c.name,
                c.cases,
                c.entries,
                fmt_sig(c.max_rel_err),
                fmt_sig(c.tolerance),
                c.passed()
            );
        }
        out
    }
}

/// Running maximum over compared entries.
#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    entries: usize,
    worst: f64,
}

impl Tally {
    fn add(&mut self, analytic: f64, numeric: f64) {
        self.entries += 1;
        let e = rel_err(analytic, numeric);
        // NaN must not hide behind max().
        self.worst = if e.is_nan() { f64::INFINITY } else { self.worst.max(e) };
    }

    fn merge(&mut self, other: Tally) {
        self.entries += other.entries;
        self.worst = self.worst.max(other.worst);
    }

    fn finish(self, name: &str, cases: usize, tolerance: f64) -> CheckResult {
        CheckResult {
            name: name.to_string(),
            cases,
            entries: self.entries,
            max_rel_err: self.worst,
            tolerance,
        }
    }
}

/// Central difference of `f` along entry `j` of `x`, using the step actually
/// representable around `x[j]`.
fn central_diff<E>(x: &mut [f64], j: usize, mut f: impl FnMut(&[f64]) -> Result<f64, E>) -> Result<f64, E> {
    let x0 = x[j];
    let (xp, xm) = (x0 + STEP, x0 - STEP);
    x[j] = xp;
    let fp = f(x)?;
    x[j] = xm;
    let fm = f(x)?;
    x[j] = x0;
    Ok((fp - fm) / (xp - xm))
}

fn uniform_tensor(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::from_vec(rows, cols, data).expect("consistent shape")
}

fn normal_tensor(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::from_vec(rows, cols, data).expect("consistent shape")
}

fn weighted_sum(out: &Tensor, w: &Tensor) -> f64 {
    out.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

type Build = dyn Fn(&mut Tape, &[Var]) -> Result<Var, AdError>;

/// Compares adjoints of `sum(w * build(inputs))` for random weights `w`
/// against finite differences of the recorded forward values.
fn check_recorded(inputs: &[Tensor], build: &Build, rng: &mut ChaCha8Rng) -> Result<Tally, AdError> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars)?;
    let (r, c) = tape.value(out).shape();
    let w = uniform_tensor(r, c, -1.0, 1.0, rng);
    let wv = tape.constant(w.clone());
    let prod = tape.mul(out, wv)?;
    let loss = tape.sum(prod);
    let grads = tape.backward(loss)?;

    let eval = |xs: &[Tensor]| -> Result<f64, AdError> {
        let mut t = Tape::new();
        let vs: Vec<Var> = xs.iter().map(|x| t.constant(x.clone())).collect();
        let o = build(&mut t, &vs)?;
        Ok(weighted_sum(t.value(o), &w))
    };

    let mut tally = Tally::default();
    let mut xs = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let g = grads.get_or_zeros(*v);
        for j in 0..xs[i].len() {
            let mut data = xs[i].data().to_vec();
            let numeric = central_diff(&mut data, j, |d| {
                xs[i].data_mut().copy_from_slice(d);
                eval(&xs)
            })?;
            xs[i].data_mut().copy_from_slice(&data);
            tally.add(g.data()[j], numeric);
        }
    }
    Ok(tally)
}

/// A shape that broadcasts against `rows x cols`.
fn broadcast_partner(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> (usize, usize) {
    match rng.random_range(0..4) {
        0 => (rows, cols),
        1 => (1, cols),
        2 => (rows, 1),
        _ => (1, 1),
    }
}

/// Values bounded away from zero, either sign.
fn away_from_zero(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = uniform_tensor(rows, cols, 0.5, 2.0, rng);
    for v in t.data_mut() {
        if rng.random_bool(0.5) {
            *v = -*v;
        }
    }
    t
}

/// Every tape operation, `cases` random shapes and inputs each.
pub fn check_primitives(seed: u64, cases: usize) -> Result<Vec<CheckResult>, AdError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = [
        "add", "sub", "mul", "div", "matmul", "sum", "mean", "sum_cols", "exp", "log", "tanh", "gelu", "square",
        "sin", "cos", "atan", "clamp_st", "affine", "neg", "slice_cols", "concat_cols",
    ];
    let mut results = Vec::with_capacity(names.len());
    for name in names {
        let mut tally = Tally::default();
        for _ in 0..cases {
            let (r, c) = (rng.random_range(1..=4), rng.random_range(1..=4));
            let x = uniform_tensor(r, c, -3.0, 3.0, &mut rng);
            let unary = |f: fn(&mut Tape, Var) -> Var| -> Box<Build> { Box::new(move |t, v| Ok(f(t, v[0]))) };
            let (inputs, build): (Vec<Tensor>, Box<Build>) = match name {
                "add" | "sub" | "mul" | "div" => {
                    let (br, bc) = broadcast_partner(r, c, &mut rng);
                    let y = uniform_tensor(br, bc, -3.0, 3.0, &mut rng);
                    // Exercise broadcasting on both sides.
                    let (a, b) = if rng.random_bool(0.5) { (x, y) } else { (y, x) };
                    let b = if name == "div" {
                        away_from_zero(b.rows(), b.cols(), &mut rng)
                    } else {
                        b
                    };
                    let op: fn(&mut Tape, Var, Var) -> Result<Var, AdError> = match name {
                        "add" => Tape::add,
                        "sub" => Tape::sub,
                        "mul" => Tape::mul,
                        _ => Tape::div,
                    };
                    (vec![a, b], Box::new(move |t, v| op(t, v[0], v[1])))
                }
                "matmul" => {
                    let k = rng.random_range(1..=4);
                    let a = uniform_tensor(r, k, -2.0, 2.0, &mut rng);
                    let b = uniform_tensor(k, c, -2.0, 2.0, &mut rng);
                    (vec![a, b], Box::new(|t, v| t.matmul(v[0], v[1])))
                }
                "sum" => (vec![x], unary(Tape::sum)),
                "mean" => (vec![x], unary(Tape::mean)),
                "sum_cols" => (vec![x], unary(Tape::sum_cols)),
                "exp" => (vec![uniform_tensor(r, c, -2.0, 2.0, &mut rng)], unary(Tape::exp)),
                "log" => (vec![uniform_tensor(r, c, 0.5, 3.0, &mut rng)], Box::new(|t, v| t.log(v[0]))),
                "tanh" => (vec![x], unary(Tape::tanh)),
                "gelu" => (vec![x], unary(Tape::gelu)),
                "square" => (vec![x], unary(Tape::square)),
                "sin" => (vec![x], unary(Tape::sin)),
                "cos" => (vec![x], unary(Tape::cos)),
                "atan" => (vec![x], unary(Tape::atan)),
                "clamp_st" => {
                    // Only the interior, where the clamp is the identity.
                    let (lo, hi) = (rng.random_range(-4.0..-3.1), rng.random_range(3.1..4.0));
                    (vec![x], Box::new(move |t, v| Ok(t.clamp_st(v[0], lo, hi))))
                }
                "affine" => {
                    let (scale, shift) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
                    (vec![x], Box::new(move |t, v| Ok(t.affine(v[0], scale, shift))))
                }
                "neg" => (vec![x], unary(Tape::neg)),
                "slice_cols" => {
                    let start = rng.random_range(0..c);
                    let width = rng.random_range(1..=c - start);
                    (vec![x], Box::new(move |t, v| t.slice_cols(v[0], start, width)))
                }
                _ => {
                    let n = rng.random_range(1..=3);
                    let parts: Vec<Tensor> = (0..n)
                        .map(|_| {
                            let w = rng.random_range(1..=3);
                            uniform_tensor(r, w, -3.0, 3.0, &mut rng)
                        })
                        .collect();
                    (parts, Box::new(|t, v| t.concat_cols(v)))
                }
            };
            tally.merge(check_recorded(&inputs, build.as_ref(), &mut rng)?);
        }
        results.push(tally.finish(&format!("primitive/{name}"), cases, PRIMITIVE_TOL));
    }
    Ok(results)
}

/// Parameter and input gradients of several network shapes.
pub fn check_mlp(seed: u64, cases: usize) -> Result<Vec<CheckResult>, AdError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let variants: [(&str, &[usize], Activation, OutputActivation); 3] = [
        ("mlp/2x8x1", &[2, 8, 1], Activation::Gelu, OutputActivation::Linear),
        ("mlp/3x8x8x2-tanh", &[3, 8, 8, 2], Activation::Tanh, OutputActivation::TanhSquash),
        ("mlp/7x16x16x4", &[7, 16, 16, 4], Activation::Gelu, OutputActivation::Linear),
    ];
    let mut results = Vec::new();
    for (name, sizes, hidden, output) in variants {
        let mut tally = Tally::default();
        for _ in 0..cases {
            let mut net = MlpParams::new(sizes, hidden, output, &mut rng)?;
            // Non-zero biases so every term is exercised.
            for t in net.tensors_mut().into_iter().skip(1).step_by(2) {
                for v in t.data_mut() {
                    *v = rng.random_range(-0.5..0.5);
                }
            }
            let batch = rng.random_range(1..=4);
            let x = uniform_tensor(batch, sizes[0], -2.0, 2.0, &mut rng);
            let w = uniform_tensor(batch, *sizes.last().expect("non-empty"), -1.0, 1.0, &mut rng);

            let mut tape = Tape::new();
            let vars = net.register(&mut tape, true);
            let xv = tape.leaf(x.clone());
            let out = net.forward_tape(&mut tape, &vars, xv)?;
            let wv = tape.constant(w.clone());
            let prod = tape.mul(out, wv)?;
            let loss = tape.sum(prod);
            let g = tape.backward(loss)?;

            for (k, grad) in vars.grads(&g).iter().enumerate() {
                for j in 0..grad.len() {
                    let mut probe = net.clone();
                    let mut data = probe.tensors()[k].data().to_vec();
                    let numeric = central_diff(&mut data, j, |d| {
                        probe.tensors_mut()[k].data_mut().copy_from_slice(d);
                        Ok::<_, AdError>(weighted_sum(&probe.forward(&x)?, &w))
                    })?;
                    tally.add(grad.data()[j], numeric);
                }
            }
            let gx = g.get_or_zeros(xv);
            let mut xd = x.data().to_vec();
            for j in 0..xd.len() {
                let numeric = central_diff(&mut xd, j, |d| {
                    let xp = Tensor::from_vec(x.rows(), x.cols(), d.to_vec())?;
                    Ok::<_, AdError>(weighted_sum(&net.forward(&xp)?, &w))
                })?;
                tally.add(gx.data()[j], numeric);
            }
        }
        results.push(tally.finish(name, cases, COMPOSITE_TOL));
    }
    Ok(results)
}

/// Sample gradients of the head with respect to its mean and log-std inputs:
/// one fixed reference case plus `cases` random ones.
pub fn check_head(seed: u64, cases: usize) -> Result<CheckResult, AdError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::default();
    for case in 0..=cases {
        let (head, mean, logstd, noise) = if case == 0 {
            let h = SquashedGaussianHead::new(vec![-1.0], vec![1.0])?;
            (h, Tensor::scalar(0.0), Tensor::scalar(-1.0), Tensor::scalar(0.5))
        } else {
            let d = rng.random_range(1..=3);
            let lo: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..0.0)).collect();
            let hi: Vec<f64> = lo.iter().map(|l| l + rng.random_range(0.1..4.0)).collect();
            let b = rng.random_range(1..=3);
            (
                SquashedGaussianHead::new(lo, hi)?,
                uniform_tensor(b, d, -2.0, 2.0, &mut rng),
                uniform_tensor(b, d, -3.0, 1.0, &mut rng),
                normal_tensor(b, d, &mut rng),
            )
        };
        let w = uniform_tensor(mean.rows(), mean.cols(), -1.0, 1.0, &mut rng);
        let mut tape = Tape::new();
        let mv = tape.leaf(mean.clone());
        let lv = tape.leaf(logstd.clone());
        let a = head.sample_tape(&mut tape, mv, lv, &noise)?;
        let wv = tape.constant(w.clone());
        let prod = tape.mul(a, wv)?;
        let loss = tape.sum(prod);
        let g = tape.backward(loss)?;

        let (gm, gl) = (g.get_or_zeros(mv), g.get_or_zeros(lv));
        let mut md = mean.data().to_vec();
        for j in 0..md.len() {
            let numeric = central_diff(&mut md, j, |d| {
                let m = Tensor::from_vec(mean.rows(), mean.cols(), d.to_vec())?;
                Ok::<_, AdError>(weighted_sum(&head.sample(&m, &logstd, &noise)?, &w))
            })?;
            tally.add(gm.data()[j], numeric);
        }
        let mut ld = logstd.data().to_vec();
        for j in 0..ld.len() {
            let numeric = central_diff(&mut ld, j, |d| {
                let l = Tensor::from_vec(mean.rows(), mean.cols(), d.to_vec())?;
                Ok::<_, AdError>(weighted_sum(&head.sample(&mean, &l, &noise)?, &w))
            })?;
            tally.add(gl.data()[j], numeric);
        }
    }
    Ok(tally.finish("head/squashed_gaussian", cases + 1, COMPOSITE_TOL))
}

/// Inputs of one model step: the six state entries, steer, accel, dist.
const MODEL_INPUTS: usize = STATE_DIM + 3;

fn model_step_plain(params: &VehicleParams, mode: PathMode, x: &[f64]) -> Result<[f64; STATE_DIM], PathError> {
    let mut s = [0.0; STATE_DIM];
    s.copy_from_slice(&x[..STATE_DIM]);
    let c = Control {
        steer: x[STATE_DIM],
        accel: x[STATE_DIM + 1],
    };
    Ok(dynamics_step(&VehicleState::from_array(s), c, x[STATE_DIM + 2], params, mode)?.to_array())
}

/// All 6 x 9 partials of the model step at `points` random operating points
/// with forward speed in `[5, 25]`.
pub fn check_dynamics(seed: u64, points: usize, mode: PathMode) -> Result<CheckResult, PathError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = VehicleParams::default();
    let mut tally = Tally::default();
    for _ in 0..points {
        let x: [f64; MODEL_INPUTS] = [
            rng.random_range(0.0..1200.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-0.3..0.3),
            rng.random_range(5.0..25.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.4..0.4),
            rng.random_range(-1.5..3.0),
            rng.random_range(-0.5..0.5),
        ];
        let mut tape = Tape::new();
        let leaves: Vec<Var> = x.iter().map(|&v| tape.leaf(Tensor::scalar(v))).collect();
        let mut s = [leaves[0]; STATE_DIM];
        s.copy_from_slice(&leaves[..STATE_DIM]);
        let next = {
            let mut ar = TapeArith { tape: &mut tape };
            dynamics_generic(
                &mut ar,
                &params,
                mode,
                s,
                leaves[STATE_DIM],
                leaves[STATE_DIM + 1],
                leaves[STATE_DIM + 2],
            )?
        };
        let mut xs = x.to_vec();
        for (out, &node) in next.iter().enumerate() {
            let g = tape.backward(node).map_err(PathError::from)?;
            for (j, &leaf) in leaves.iter().enumerate() {
                let numeric = central_diff(&mut xs, j, |d| model_step_plain(&params, mode, d).map(|n| n[out]))?;
                tally.add(g.get_or_zeros(leaf).item(), numeric);
            }
        }
    }
    let name = match mode {
        PathMode::Sine => "model/step_sine",
        PathMode::Straight => "model/step_straight",
    };
    Ok(tally.finish(name, points, PRIMITIVE_TOL))
}

/// Policy objective `mean(r + gamma V(s'))` evaluated without a tape.
fn policy_objective_plain(
    agent: &Agent,
    states: &[VehicleState],
    env: &PathTrackEnv,
    gamma: f64,
    with_adversary: bool,
    noise_a: &Tensor,
    noise_u: &Tensor,
) -> Result<f64, SaacError> {
    let feats = features_batch(states);
    let ph = agent.protagonist_head();
    let (m, ls) = ph.split_output(&agent.protagonist.forward(&feats)?)?;
    let a = ph.sample(&m, &ls, noise_a)?;
    let u = if with_adversary {
        let ah = agent.adversary_head();
        let (m, ls) = ah.split_output(&agent.adversary.forward(&feats)?)?;
        ah.sample(&m, &ls, noise_u)?
    } else {
        Tensor::zeros(states.len(), 1)
    };
    let mut costs = Vec::with_capacity(states.len());
    let mut nexts = Vec::with_capacity(states.len());
    for (i, s) in states.iter().enumerate() {
        let c = Control {
            steer: a.get(i, 0),
            accel: a.get(i, 1),
        };
        costs.push(reward(s, c));
        nexts.push(dynamics_step(s, c, u.get(i, 0), &env.params, env.mode)?);
    }
    let v = agent.value.forward(&features_batch(&nexts))?;
    let scale = gamma * agent.value_scale();
    let total: f64 = costs.iter().zip(v.data()).map(|(c, v)| c + scale * v).sum();
    Ok(total / states.len() as f64)
}

fn test_agent(seed: u64, rng: &mut ChaCha8Rng) -> Result<(Agent, TrainConfig, PathTrackEnv), SaacError> {
    let cfg = TrainConfig {
        seed,
        ..TrainConfig::desk()
    };
    let env = PathTrackEnv::default();
    let agent = Agent::new(&cfg, &env.bounds, rng)?;
    Ok((agent, cfg, env))
}

/// Protagonist and adversary gradients of the policy objective on a batch of
/// `batch` states, through the head, the model, the cost and the critic.
pub fn check_policy_objective(seed: u64, batch: usize) -> Result<Vec<CheckResult>, SaacError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (agent, cfg, env) = test_agent(seed, &mut rng)?;
    let states: Vec<VehicleState> = (0..batch).map(|_| env.reset(&mut rng)).collect();
    let noise_a = normal_tensor(batch, 2, &mut rng);
    let noise_u = normal_tensor(batch, 1, &mut rng);
    let graph = agent.policy_graph(&states, &env, cfg.gamma, true, &noise_a, &noise_u)?;
    let grads = graph.tape.backward(graph.objective)?;
    let adversary_vars = graph.adversary.as_ref().expect("adversary registered");

    let mut results = Vec::new();
    for (name, analytic, is_adversary) in [
        ("objective/protagonist", graph.protagonist.grads(&grads), false),
        ("objective/adversary", adversary_vars.grads(&grads), true),
    ] {
        let mut tally = Tally::default();
        let mut probe = agent.clone();
        for (k, grad) in analytic.iter().enumerate() {
            let net = |a: &Agent| if is_adversary { a.adversary.clone() } else { a.protagonist.clone() };
            let mut data = net(&probe).tensors()[k].data().to_vec();
            for j in 0..grad.len() {
                let numeric = central_diff(&mut data, j, |d| {
                    let target = if is_adversary {
                        &mut probe.adversary
                    } else {
                        &mut probe.protagonist
                    };
                    target.tensors_mut()[k].data_mut().copy_from_slice(d);
                    policy_objective_plain(&probe, &states, &env, cfg.gamma, true, &noise_a, &noise_u)
                })?;
                tally.add(grad.data()[j], numeric);
            }
            let target = if is_adversary {
                &mut probe.adversary
            } else {
                &mut probe.protagonist
            };
            target.tensors_mut()[k].data_mut().copy_from_slice(&data);
        }
        results.push(tally.finish(name, 1, COMPOSITE_TOL));
    }
    Ok(results)
}

/// Critic parameter gradients of the half mean-squared regression loss.
pub fn check_value_loss(seed: u64, batch: usize) -> Result<CheckResult, SaacError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (agent, _, env) = test_agent(seed, &mut rng)?;
    let states: Vec<VehicleState> = (0..batch).map(|_| env.reset(&mut rng)).collect();
    let targets: Vec<f64> = (0..batch).map(|_| rng.random_range(0.0..50.0)).collect();
    let (_, analytic) = agent.value_loss_and_grads(&states, &targets)?;
    let feats = features_batch(&states);
    let scale = agent.value_scale();
    let loss = |net: &MlpParams| -> Result<f64, SaacError> {
        let v = net.forward(&feats)?;
        let sq: f64 = v.data().iter().zip(&targets).map(|(v, y)| (scale * v - y).powi(2)).sum();
        Ok(0.5 * sq / batch as f64)
    };
    let mut tally = Tally::default();
    let mut probe = agent.value.clone();
    for (k, grad) in analytic.iter().enumerate() {
        let mut data = probe.tensors()[k].data().to_vec();
        for j in 0..grad.len() {
            let numeric = central_diff(&mut data, j, |d| {
                probe.tensors_mut()[k].data_mut().copy_from_slice(d);
                loss(&probe)
            })?;
            tally.add(grad.data()[j], numeric);
        }
        probe.tensors_mut()[k].data_mut().copy_from_slice(&data);
    }
    Ok(tally.finish("objective/value_loss", 1, COMPOSITE_TOL))
}

/// The full suite: 100 cases per primitive, network and head checks, the
/// model at 50 points in each path mode, and both training objectives on a
/// three-state batch.
pub fn run_all(seed: u64) -> Result<GradcheckReport, GradcheckError> {
    let mut checks = check_primitives(seed, 100)?;
    checks.extend(check_mlp(seed.wrapping_add(1), 10)?);
    checks.push(check_head(seed.wrapping_add(2), 100)?);
    checks.push(check_dynamics(seed.wrapping_add(3), 50, PathMode::Straight)?);
    checks.push(check_dynamics(seed.wrapping_add(4), 50, PathMode::Sine)?);
    checks.extend(check_policy_objective(seed.wrapping_add(5), 3)?);
    checks.push(check_value_loss(seed.wrapping_add(6), 8)?);
    Ok(GradcheckReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(rel_err(2.0, 2.0), 0.0);
        assert!((rel_err(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
        assert!((rel_err(0.0, 1e-9) - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn nan_counts_as_failure() {
        let mut t = Tally::default();
        t.add(f64::NAN, 1.0);
        assert!(!t.finish("x", 1, 1.0).passed());
    }

    #[test]
    fn a_wrong_gradient_is_caught() {
        // Finite differences of x^2 against a deliberately halved adjoint.
        let mut x = [1.5];
        let numeric = central_diff(&mut x, 0, |d| Ok::<_, ()>(d[0] * d[0])).unwrap();
        let mut t = Tally::default();
        t.add(1.5, numeric);
        assert!(!t.finish("halved", 1, COMPOSITE_TOL).passed());
    }

    #[test]
    fn full_suite_passes() {
        let report = run_all(0).unwrap();
        print!("{}", report.to_csv());
        assert!(report.all_passed(), "{:?}", report.failures());
    }
}
