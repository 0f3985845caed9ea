//! Bellman operators for zero-sum Markov games and their fixed-point iteration.
//!
//! Three policy-evaluation operators are provided:
//!
//! * the joint operator `T^{pi,mu}` (expectation over both players),
//! * the worst-case operator `T^pi` (exact max over adversary actions),
//! * the smoothed operator, which replaces that max with a weighted
//!   LogSumExp (WLSE) whose weights are the adversary policy or a uniform row.
//!
//! All three are gamma-contractions in the sup norm, so plain iteration from
//! any starting table converges to the unique fixed point.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{MarkovGame, TabularPolicy, ValueTable};

pub const DEFAULT_PEV_TOL: f64 = 1e-9;
pub const DEFAULT_PEV_MAX_ITER: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BellmanError {
    #[error("empty input")]
    EmptyInput,
    #[error("weights do not match values: {0}")]
    WeightMismatch(String),
    #[error("all weights are zero")]
    AllWeightsZero,
    #[error("approximation factor must be positive, got {0}")]
    InvalidRho(f64),
    #[error("weight on the maximal entry is zero; the error bound is unbounded")]
    ZeroWeight,
    #[error("policy shape mismatch: {0}")]
    PolicyShapeMismatch(String),
    #[error("tolerance must be positive and max_iter at least 1")]
    InvalidStopping,
    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
}

/// Which weights the smoothed operator uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightMode {
    /// Weights are the current adversary policy `mu(.|s)`.
    Adversary,
    /// Uniform weights over adversary actions, ignoring `mu`.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WlseConfig {
    pub rho: f64,
    pub weight_mode: WeightMode,
}

impl WlseConfig {
    pub fn new(rho: f64, weight_mode: WeightMode) -> Result<Self, BellmanError> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(BellmanError::InvalidRho(rho));
        }
        Ok(Self { rho, weight_mode })
    }

    pub fn adversary(rho: f64) -> Result<Self, BellmanError> {
        Self::new(rho, WeightMode::Adversary)
    }

    pub fn uniform(rho: f64) -> Result<Self, BellmanError> {
        Self::new(rho, WeightMode::Uniform)
    }
}

/// Weighted LogSumExp `(1/rho) log sum_i w_i exp(rho x_i)`.
///
/// Evaluated with a max shift over the positively weighted entries; zero
/// weights are skipped so they contribute exactly nothing.
pub fn wlse(values: &[f64], weights: &[f64], rho: f64) -> Result<f64, BellmanError> {
    if values.is_empty() {
        return Err(BellmanError::EmptyInput);
    }
    if values.len() != weights.len() {
        return Err(BellmanError::WeightMismatch(format!(
            "{} values, {} weights",
            values.len(),
            weights.len()
        )));
    }
    if !(rho > 0.0) {
        return Err(BellmanError::InvalidRho(rho));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(BellmanError::WeightMismatch("negative or NaN weight".into()));
    }
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return Err(BellmanError::AllWeightsZero);
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(BellmanError::WeightMismatch(format!("weights sum to {total}")));
    }
    Ok(wlse_unchecked(values, weights, rho))
}

#[inline]
pub(crate) fn wlse_unchecked(values: &[f64], weights: &[f64], rho: f64) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for (&x, &w) in values.iter().zip(weights) {
        if w > 0.0 && x > m {
            m = x;
        }
    }
    let mut acc = 0.0;
    for (&x, &w) in values.iter().zip(weights) {
        if w > 0.0 {
            acc += w * (rho * (x - m)).exp();
        }
    }
    m + acc.ln() / rho
}

/// Bound on `max(x) - wlse(x, w, rho)` given the weight `w_m` on the maximal entry.
pub fn wlse_error_bound(w_m: f64, rho: f64) -> Result<f64, BellmanError> {
    if !(rho > 0.0) {
        return Err(BellmanError::InvalidRho(rho));
    }
    if !(w_m > 0.0 && w_m <= 1.0) {
        return Err(BellmanError::ZeroWeight);
    }
    Ok(w_m.ln().abs() / rho)
}

fn check_policy(p: &TabularPolicy, n_states: usize, n_actions: usize, who: &str) -> Result<(), BellmanError> {
    if p.check_shape(n_states, n_actions) {
        Ok(())
    } else {
        Err(BellmanError::PolicyShapeMismatch(format!(
            "{who} policy is {}x{}, game needs {n_states}x{n_actions}",
            p.n_states(),
            p.n_actions()
        )))
    }
}

fn check_values(game: &MarkovGame, v: &ValueTable) -> Result<(), BellmanError> {
    if v.len() == game.n_states() {
        Ok(())
    } else {
        Err(BellmanError::PolicyShapeMismatch(format!(
            "value table has {} states, game has {}",
            v.len(),
            game.n_states()
        )))
    }
}

/// `sum_a pi(a|s) [r + gamma E v]` for each adversary action `u`.
fn protagonist_mixed_backups(game: &MarkovGame, pi: &TabularPolicy, s: usize, v: &[f64], out: &mut Vec<f64>) {
    out.clear();
    let pi_row = pi.row(s);
    for u in 0..game.n_adversary_actions() {
        let mut acc = 0.0;
        for (a, &p) in pi_row.iter().enumerate() {
            if p != 0.0 {
                acc += p * game.backup(s, a, u, v);
            }
        }
        out.push(acc);
    }
}

/// One policy-evaluation operator bound to its policies.
#[derive(Debug, Clone, Copy)]
pub enum Operator<'a> {
    Joint {
        pi: &'a TabularPolicy,
        mu: &'a TabularPolicy,
    },
    WorstCase {
        pi: &'a TabularPolicy,
    },
    Wlse {
        pi: &'a TabularPolicy,
        mu: &'a TabularPolicy,
        cfg: WlseConfig,
    },
}

impl Operator<'_> {
    pub fn validate(&self, game: &MarkovGame) -> Result<(), BellmanError> {
        let (ns, na, nu) = (game.n_states(), game.n_protagonist_actions(), game.n_adversary_actions());
        match self {
            Operator::Joint { pi, mu } => {
                check_policy(pi, ns, na, "protagonist")?;
                check_policy(mu, ns, nu, "adversary")
            }
            Operator::WorstCase { pi } => check_policy(pi, ns, na, "protagonist"),
            Operator::Wlse { pi, mu, cfg } => {
                if !(cfg.rho > 0.0) {
                    return Err(BellmanError::InvalidRho(cfg.rho));
                }
                check_policy(pi, ns, na, "protagonist")?;
                if cfg.weight_mode == WeightMode::Adversary {
                    check_policy(mu, ns, nu, "adversary")?;
                }
                Ok(())
            }
        }
    }

    /// Applies the operator once; the caller has validated shapes.
    fn apply_raw(&self, game: &MarkovGame, v: &[f64]) -> Vec<f64> {
        let nu = game.n_adversary_actions();
        let uniform = vec![1.0 / nu as f64; nu];
        let mut xs = Vec::with_capacity(nu);
        (0..game.n_states())
            .map(|s| match self {
                Operator::Joint { pi, mu } => {
                    protagonist_mixed_backups(game, pi, s, v, &mut xs);
                    xs.iter().zip(mu.row(s)).map(|(x, m)| x * m).sum()
                }
                Operator::WorstCase { pi } => {
                    protagonist_mixed_backups(game, pi, s, v, &mut xs);
                    xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                }
                Operator::Wlse { pi, mu, cfg } => {
                    protagonist_mixed_backups(game, pi, s, v, &mut xs);
                    let w = match cfg.weight_mode {
                        WeightMode::Adversary => mu.row(s),
                        WeightMode::Uniform => &uniform[..],
                    };
                    wlse_unchecked(&xs, w, cfg.rho)
                }
            })
            .collect()
    }

    pub fn apply(&self, game: &MarkovGame, v: &ValueTable) -> Result<ValueTable, BellmanError> {
        self.validate(game)?;
        check_values(game, v)?;
        let values = self.apply_raw(game, &v.values);
        let residual = sup_diff(&values, &v.values);
        Ok(ValueTable { values, residual })
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn apply_joint_operator(
    game: &MarkovGame,
    pi: &TabularPolicy,
    mu: &TabularPolicy,
    v: &ValueTable,
) -> Result<ValueTable, BellmanError> {
    Operator::Joint { pi, mu }.apply(game, v)
}

pub fn apply_worstcase_operator(game: &MarkovGame, pi: &TabularPolicy, v: &ValueTable) -> Result<ValueTable, BellmanError> {
    Operator::WorstCase { pi }.apply(game, v)
}

/// Smoothed worst-case operator. In [`WeightMode::Uniform`] `mu` is ignored.
pub fn apply_wlse_operator(
    game: &MarkovGame,
    pi: &TabularPolicy,
    mu: &TabularPolicy,
    cfg: WlseConfig,
    v: &ValueTable,
) -> Result<ValueTable, BellmanError> {
    Operator::Wlse { pi, mu, cfg }.apply(game, v)
}

/// Record of a fixed-point iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PevTrace {
    /// Value table after each iteration (iteration `k` at index `k - 1`).
    pub snapshots: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl PevTrace {
    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }

    /// CSV with columns `iteration, state_0_value, ..., residual`.
    pub fn to_csv(&self) -> String {
        let n = self.snapshots.first().map_or(0, |s| s.len());
        let mut out = String::from("iteration");
        for s in 0..n {
            let _ = write!(out, ",state_{s}_value");
        }
        out.push_str(",residual\n");
        for (k, (snap, res)) in self.snapshots.iter().zip(&self.residuals).enumerate() {
            let _ = write!(out, "{}", k + 1);
            for v in snap {
                let _ = write!(out, ",{}", crate::report::fmt_sig(*v));
            }
            let _ = writeln!(out, ",{}", crate::report::fmt_sig(*res));
        }
        out
    }

    /// Turns a non-converged trace into an error.
    pub fn require_converged(&self) -> Result<(), BellmanError> {
        if self.converged {
            Ok(())
        } else {
            Err(BellmanError::NotConverged {
                iterations: self.iterations,
                residual: self.final_residual(),
            })
        }
    }
}

/// Iterates `op` from `v0` (zeros when `None`) until the sup-norm update is at
/// most `tol` or `max_iter` applications have been made.
///
/// Non-convergence is reported through [`PevTrace::converged`]; the last
/// iterate is still returned.
pub fn pev_fixed_point(
    game: &MarkovGame,
    op: &Operator<'_>,
    v0: Option<&ValueTable>,
    tol: f64,
    max_iter: usize,
) -> Result<(ValueTable, PevTrace), BellmanError> {
    if !(tol > 0.0) || max_iter == 0 {
        return Err(BellmanError::InvalidStopping);
    }
    op.validate(game)?;
    let mut v = match v0 {
        Some(v0) => {
            check_values(game, v0)?;
            v0.values.clone()
        }
        None => vec![0.0; game.n_states()],
    };
    let mut trace = PevTrace {
        snapshots: Vec::new(),
        residuals: Vec::new(),
        converged: false,
        iterations: 0,
    };
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let next = op.apply_raw(game, &v);
        residual = sup_diff(&next, &v);
        v = next;
        trace.iterations += 1;
        trace.snapshots.push(v.clone());
        trace.residuals.push(residual);
        if residual <= tol {
            trace.converged = true;
            break;
        }
    }
    Ok((ValueTable { values: v, residual }, trace))
}

fn log_weight_sup(mu: &TabularPolicy) -> f64 {
    mu.row_max().iter().map(|m| m.ln().abs()).fold(0.0, f64::max)
}

/// Sup-norm bound between the smoothed and exact worst-case fixed points:
/// `max_s |log max_u mu(u|s)| / (rho (1 - gamma))`.
pub fn pev_error_bound(mu: &TabularPolicy, rho: f64, gamma: f64) -> Result<f64, BellmanError> {
    if !(rho > 0.0) {
        return Err(BellmanError::InvalidRho(rho));
    }
    Ok(log_weight_sup(mu) / (rho * (1.0 - gamma)))
}

/// Evaluation bound that holds whichever adversary action attains the max:
/// `max_s |log min_u mu(u|s)| / (rho (1 - gamma))`.
///
/// [`pev_error_bound`] uses the largest weight in each state, which is only
/// valid when the maximizing action is also the most likely one. Infinite when
/// some weight is zero.
pub fn pev_error_bound_any_argmax(mu: &TabularPolicy, rho: f64, gamma: f64) -> Result<f64, BellmanError> {
    if !(rho > 0.0) {
        return Err(BellmanError::InvalidRho(rho));
    }
    let worst = mu
        .rows()
        .iter()
        .map(|row| row.iter().cloned().fold(f64::INFINITY, f64::min).ln().abs())
        .fold(0.0, f64::max);
    Ok(worst / (rho * (1.0 - gamma)))
}

/// Sup-norm bound between the smoothed and true optimal values:
/// `2 gamma / (1 - gamma)^3 * max_s |log max_u mu(u|s)| / rho`.
pub fn optimality_error_bound(mu: &TabularPolicy, rho: f64, gamma: f64) -> Result<f64, BellmanError> {
    if !(rho > 0.0) {
        return Err(BellmanError::InvalidRho(rho));
    }
    Ok(2.0 * gamma / (1.0 - gamma).powi(3) * log_weight_sup(mu) / rho)
}
