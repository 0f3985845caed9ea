//! Policy-iteration drivers: naive (NPI), asynchronous (API) and smoothing (SPI).
//!
//! Every round evaluates the current policy pair with the method's operator
//! (PEV), then builds the per-state game matrix from the resulting values and
//! solves it exactly for the next pair (PIM). A run stops when the extracted
//! pair equals the evaluated one, when it revisits any earlier pair (a cycle),
//! or after `max_rounds`.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bellman::{self, BellmanError, Operator, WeightMode, WlseConfig};
use crate::game::{joint_q_matrix, GameError, MarkovGame, TabularPolicy, ValueTable};
use crate::matrix_game::{solve_matrix_game, MatrixGameError, PayoffMatrix};
use crate::report::fmt_sig;

/// Policies closer than this in every entry are treated as identical.
pub const POLICY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Bellman(#[from] BellmanError),
    #[error(transparent)]
    MatrixGame(#[from] MatrixGameError),
    #[error(transparent)]
    Game(#[from] GameError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Method {
    Npi,
    Api,
    Spi(WlseConfig),
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Npi => "NPI",
            Method::Api => "API",
            Method::Spi(cfg) if cfg.weight_mode == WeightMode::Uniform => "SPI-u",
            Method::Spi(_) => "SPI",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminalStatus {
    Converged,
    CycleDetected { period: usize },
    MaxRounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Policies evaluated in this round.
    pub protagonist: TabularPolicy,
    pub adversary: TabularPolicy,
    pub values: ValueTable,
    pub pev_iterations: usize,
    pub pev_residual: f64,
    pub pev_converged: bool,
    /// Game matrix built from `values` at each state.
    pub matrices: Vec<PayoffMatrix>,
    pub equilibrium_values: Vec<f64>,
    /// Policies extracted by the improvement step.
    pub next_protagonist: TabularPolicy,
    pub next_adversary: TabularPolicy,
    /// Exact worst-case value of `protagonist`, when requested.
    pub api_reference: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveHistory {
    pub method: Method,
    pub rounds: Vec<RoundRecord>,
    pub status: TerminalStatus,
}

impl SolveHistory {
    pub fn last(&self) -> &RoundRecord {
        self.rounds.last().expect("at least one round")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("history serializes")
    }

    /// Value at `state` after each round.
    pub fn value_series(&self, state: usize) -> Vec<f64> {
        self.rounds.iter().map(|r| r.values.get(state)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub max_rounds: usize,
    pub pev_tol: f64,
    pub pev_max_iter: usize,
    /// Start every PEV from zeros instead of the previous round's values.
    pub cold_start: bool,
    /// Record the exact worst-case value of each evaluated policy.
    pub api_reference: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_rounds: 100,
            pev_tol: bellman::DEFAULT_PEV_TOL,
            pev_max_iter: bellman::DEFAULT_PEV_MAX_ITER,
            cold_start: false,
            api_reference: false,
        }
    }
}

impl SolveOptions {
    pub fn with_max_rounds(mut self, max_rounds: usize) -> Self {
        self.max_rounds = max_rounds;
        self
    }
}

fn policy_key(pi: &TabularPolicy, mu: &TabularPolicy) -> Vec<i64> {
    pi.rows()
        .iter()
        .chain(mu.rows())
        .flatten()
        .map(|p| (p / POLICY_TOL).round() as i64)
        .collect()
}

/// Result of one improvement step.
#[derive(Debug, Clone)]
pub struct Improvement {
    pub protagonist: TabularPolicy,
    pub adversary: TabularPolicy,
    pub matrices: Vec<PayoffMatrix>,
    pub equilibrium_values: Vec<f64>,
}

/// Solves every state's game matrix for the next policy pair.
pub fn improve(game: &MarkovGame, v: &ValueTable) -> Result<Improvement, SolverError> {
    let n = game.n_states();
    let mut pi_rows = Vec::with_capacity(n);
    let mut mu_rows = Vec::with_capacity(n);
    let mut matrices = Vec::with_capacity(n);
    let mut equilibrium_values = Vec::with_capacity(n);
    for s in 0..n {
        let q = joint_q_matrix(game, v, s);
        let sol = solve_matrix_game(&q)?;
        pi_rows.push(sol.row_strategy);
        mu_rows.push(sol.col_strategy);
        equilibrium_values.push(sol.value);
        matrices.push(q);
    }
    Ok(Improvement {
        protagonist: TabularPolicy::new(pi_rows)?,
        adversary: TabularPolicy::new(mu_rows)?,
        matrices,
        equilibrium_values,
    })
}

fn check_shapes(game: &MarkovGame, pi: &TabularPolicy, mu: &TabularPolicy) -> Result<(), SolverError> {
    // Any operator validates the protagonist; the joint one also checks mu.
    Operator::Joint { pi, mu }.validate(game)?;
    Ok(())
}

fn run(
    game: &MarkovGame,
    method: Method,
    pi0: &TabularPolicy,
    mu0: &TabularPolicy,
    opts: &SolveOptions,
) -> Result<SolveHistory, SolverError> {
    check_shapes(game, pi0, mu0)?;
    let mut pi = pi0.clone();
    let mut mu = mu0.clone();
    let mut seen: HashMap<Vec<i64>, usize> = HashMap::new();
    seen.insert(policy_key(&pi, &mu), 1);
    let mut rounds = Vec::new();
    let mut prev_values: Option<ValueTable> = None;
    let mut status = TerminalStatus::MaxRounds;

    for round in 1..=opts.max_rounds.max(1) {
        let op = match method {
            Method::Npi => Operator::Joint { pi: &pi, mu: &mu },
            Method::Api => Operator::WorstCase { pi: &pi },
            Method::Spi(cfg) => Operator::Wlse { pi: &pi, mu: &mu, cfg },
        };
        let warm = if opts.cold_start { None } else { prev_values.as_ref() };
        let (values, trace) = bellman::pev_fixed_point(game, &op, warm, opts.pev_tol, opts.pev_max_iter)?;
        let api_reference = if opts.api_reference {
            let (v, _) = bellman::pev_fixed_point(
                game,
                &Operator::WorstCase { pi: &pi },
                None,
                opts.pev_tol,
                opts.pev_max_iter,
            )?;
            Some(v.values)
        } else {
            None
        };
        let imp = improve(game, &values)?;

        let same = imp.protagonist.distance(&pi) <= POLICY_TOL && imp.adversary.distance(&mu) <= POLICY_TOL;
        let key = policy_key(&imp.protagonist, &imp.adversary);
        rounds.push(RoundRecord {
            round,
            protagonist: pi,
            adversary: mu,
            values: values.clone(),
            pev_iterations: trace.iterations,
            pev_residual: trace.final_residual(),
            pev_converged: trace.converged,
            matrices: imp.matrices,
            equilibrium_values: imp.equilibrium_values,
            next_protagonist: imp.protagonist.clone(),
            next_adversary: imp.adversary.clone(),
            api_reference,
        });
        pi = imp.protagonist;
        mu = imp.adversary;
        prev_values = Some(values);

        if same {
            status = TerminalStatus::Converged;
            break;
        }
        if let Some(&first) = seen.get(&key) {
            status = TerminalStatus::CycleDetected {
                period: round + 1 - first,
            };
            break;
        }
        seen.insert(key, round + 1);
    }
    Ok(SolveHistory { method, rounds, status })
}

/// Naive policy iteration: joint-value PEV, matrix-game PIM. May cycle.
pub fn run_npi(
    game: &MarkovGame,
    pi0: &TabularPolicy,
    mu0: &TabularPolicy,
    opts: &SolveOptions,
) -> Result<SolveHistory, SolverError> {
    run(game, Method::Npi, pi0, mu0, opts)
}

/// Asynchronous policy iteration: worst-case PEV with an exact max over `u`.
///
/// The adversary policy only matters through PIM, so the run starts from a
/// uniform adversary.
pub fn run_api(game: &MarkovGame, pi0: &TabularPolicy, opts: &SolveOptions) -> Result<SolveHistory, SolverError> {
    let mu0 = TabularPolicy::uniform(game.n_states(), game.n_adversary_actions());
    run(game, Method::Api, pi0, &mu0, opts)
}

/// Smoothing policy iteration: WLSE PEV weighted by `mu` (or uniform).
pub fn run_spi(
    game: &MarkovGame,
    pi0: &TabularPolicy,
    mu0: &TabularPolicy,
    cfg: WlseConfig,
    opts: &SolveOptions,
) -> Result<SolveHistory, SolverError> {
    run(game, Method::Spi(cfg), pi0, mu0, opts)
}

/// A policy pair to evaluate in [`compare_solvers`], labelled with its round.
#[derive(Debug, Clone)]
pub struct EvalPoint {
    pub round: usize,
    pub protagonist: TabularPolicy,
    pub adversary: TabularPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub rho: Option<f64>,
    pub round: usize,
    pub state: usize,
    pub value: f64,
    /// `|v - v_API| / |v_API|` in percent; zero when both are zero.
    pub pct_error: f64,
    /// PEV error bound for the weights used; zero for API.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub statuses: Vec<(String, TerminalStatus)>,
}

impl ComparisonReport {
    /// CSV with columns `method, rho, round, state, value, pct_error, bound`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,rho,round,state,value,pct_error,bound\n");
        for r in &self.rows {
            let rho = r.rho.map(fmt_sig).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.method,
                rho,
                r.round,
                r.state,
                fmt_sig(r.value),
                fmt_sig(r.pct_error),
                fmt_sig(r.bound)
            );
        }
        out
    }

    pub fn find(&self, method: &str, rho: Option<f64>, round: usize, state: usize) -> Option<&ComparisonRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.rho == rho && r.round == round && r.state == state)
    }

    /// Restricts the report to one round.
    pub fn for_round(&self, round: usize) -> ComparisonReport {
        ComparisonReport {
            rows: self.rows.iter().filter(|r| r.round == round).cloned().collect(),
            statuses: self.statuses.clone(),
        }
    }
}

pub fn pct_error(value: f64, reference: f64) -> f64 {
    let diff = (value - reference).abs();
    if diff == 0.0 {
        0.0
    } else {
        100.0 * diff / reference.abs()
    }
}

/// Tabulates smoothed fixed points against the exact worst-case value for each
/// evaluation point, and records the terminal status of full NPI/API/SPI runs
/// started from the first point.
///
/// `rho_list` drives adversary-weighted rows; `uniform_rhos` drives SPI-u rows.
pub fn compare_solvers(
    game: &MarkovGame,
    inits: &[EvalPoint],
    rho_list: &[f64],
    uniform_rhos: &[f64],
    opts: &SolveOptions,
) -> Result<ComparisonReport, SolverError> {
    let mut rows = Vec::new();
    let gamma = game.gamma();
    let uniform = TabularPolicy::uniform(game.n_states(), game.n_adversary_actions());
    for point in inits {
        let (pi, mu) = (&point.protagonist, &point.adversary);
        let (api, _) = bellman::pev_fixed_point(
            game,
            &Operator::WorstCase { pi },
            None,
            opts.pev_tol,
            opts.pev_max_iter,
        )?;
        let configs = rho_list
            .iter()
            .map(|&r| WlseConfig::adversary(r))
            .chain(uniform_rhos.iter().map(|&r| WlseConfig::uniform(r)));
        for cfg in configs {
            let cfg = cfg?;
            let (v, _) =
                bellman::pev_fixed_point(game, &Operator::Wlse { pi, mu, cfg }, None, opts.pev_tol, opts.pev_max_iter)?;
            let weights = match cfg.weight_mode {
                WeightMode::Adversary => mu,
                WeightMode::Uniform => &uniform,
            };
            let bound = bellman::pev_error_bound(weights, cfg.rho, gamma)?;
            let label = Method::Spi(cfg).label();
            for s in 0..game.n_states() {
                rows.push(ComparisonRow {
                    method: label.into(),
                    rho: Some(cfg.rho),
                    round: point.round,
                    state: s,
                    value: v.get(s),
                    pct_error: pct_error(v.get(s), api.get(s)),
                    bound,
                });
            }
        }
        for s in 0..game.n_states() {
            rows.push(ComparisonRow {
                method: "API".into(),
                rho: None,
                round: point.round,
                state: s,
                value: api.get(s),
                pct_error: 0.0,
                bound: 0.0,
            });
        }
    }

    let mut statuses = Vec::new();
    if let Some(first) = inits.first() {
        let (pi, mu) = (&first.protagonist, &first.adversary);
        statuses.push(("NPI".to_string(), run_npi(game, pi, mu, opts)?.status));
        statuses.push(("API".to_string(), run_api(game, pi, opts)?.status));
        for &r in rho_list {
            let h = run_spi(game, pi, mu, WlseConfig::adversary(r)?, opts)?;
            statuses.push((format!("SPI rho={}", fmt_sig(r)), h.status));
        }
        for &r in uniform_rhos {
            let h = run_spi(game, pi, mu, WlseConfig::uniform(r)?, opts)?;
            statuses.push((format!("SPI-u rho={}", fmt_sig(r)), h.status));
        }
    }
    Ok(ComparisonReport { rows, statuses })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(actions: &[usize]) -> TabularPolicy {
        TabularPolicy::deterministic(2, actions).unwrap()
    }

    fn pi0() -> TabularPolicy {
        TabularPolicy::new(vec![vec![0.5, 0.5]; 2]).unwrap()
    }

    fn mu0() -> TabularPolicy {
        TabularPolicy::new(vec![vec![0.45, 0.55]; 2]).unwrap()
    }

    #[test]
    fn npi_oscillates() {
        let g = MarkovGame::two_state_counterexample();
        let h = run_npi(&g, &det(&[0, 0]), &det(&[0, 0]), &SolveOptions::default()).unwrap();
        assert_eq!(h.status, TerminalStatus::CycleDetected { period: 2 });
        let v = h.value_series(0);
        assert!((v[0] + 12.0).abs() < 1e-6 && (v[1] + 4.0).abs() < 1e-6);
        assert_eq!(h.rounds[0].next_protagonist.row(0), &[0.0, 1.0]);
        assert_eq!(h.rounds[0].next_adversary.row(0), &[0.0, 1.0]);
    }

    #[test]
    fn trivial_game_converges_first_round() {
        let g = crate::game::make_game(1, 1, 1, &[vec![vec![vec![1.0]]]], &[vec![vec![0.0]]], 0.0).unwrap();
        let p = TabularPolicy::uniform(1, 1);
        let h = run_npi(&g, &p, &p, &SolveOptions::default()).unwrap();
        assert_eq!(h.status, TerminalStatus::Converged);
        assert_eq!(h.rounds.len(), 1);
    }

    #[test]
    fn api_converges_to_optimum() {
        let g = MarkovGame::two_state_counterexample();
        let h = run_api(&g, &pi0(), &SolveOptions::default()).unwrap();
        assert_eq!(h.status, TerminalStatus::Converged);
        assert!(h.rounds.len() <= 3);
        assert!((h.rounds[0].values.get(0) + 7.0).abs() < 1e-6);
        assert_eq!(h.rounds[1].protagonist.row(0), &[1.0, 0.0]);
        assert!((h.rounds[1].values.get(0) + 8.0).abs() < 1e-6);
        assert_eq!(h.last().next_protagonist.row(0), &[1.0, 0.0]);
        assert_eq!(h.last().next_adversary.row(0), &[0.0, 1.0]);
    }

    #[test]
    fn spi_rounds() {
        let g = MarkovGame::two_state_counterexample();
        let opts = SolveOptions {
            api_reference: true,
            ..SolveOptions::default()
        };
        let h = run_spi(&g, &pi0(), &mu0(), WlseConfig::adversary(5.0).unwrap(), &opts).unwrap();
        assert!((h.rounds[0].values.get(0) + 7.2334).abs() < 1e-3);
        assert!(h.rounds[0].api_reference.is_some());
        let h = run_spi(&g, &pi0(), &mu0(), WlseConfig::adversary(10.0).unwrap(), &opts).unwrap();
        assert!((h.rounds[1].values.get(0) + 8.0).abs() < 1e-6);
        let h = run_spi(&g, &pi0(), &mu0(), WlseConfig::uniform(10.0).unwrap(), &opts).unwrap();
        assert!((h.rounds[1].values.get(0) + 8.09).abs() < 0.01);
    }

    #[test]
    fn zero_reward_game_is_immediate() {
        let t = vec![vec![vec![vec![0.5, 0.5]; 2]; 2]; 2];
        let r = vec![vec![vec![0.0; 2]; 2]; 2];
        let g = crate::game::make_game(2, 2, 2, &t, &r, 0.9).unwrap();
        let h = run_api(&g, &TabularPolicy::uniform(2, 2), &SolveOptions::default()).unwrap();
        assert!(h.rounds.iter().all(|r| r.values.values == vec![0.0, 0.0]));
        assert_eq!(h.status, TerminalStatus::Converged);
        assert!(h.rounds.len() <= 2);
    }

    #[test]
    fn comparison_table() {
        let g = MarkovGame::two_state_counterexample();
        let report = compare_solvers(
            &g,
            &[EvalPoint {
                round: 1,
                protagonist: pi0(),
                adversary: mu0(),
            }],
            &[1.0],
            &[10.0],
            &SolveOptions::default(),
        )
        .unwrap();
        let row = report.find("SPI", Some(1.0), 1, 0).unwrap();
        assert!((row.pct_error - 8.92).abs() < 0.05);
        assert!(row.pct_error / 100.0 * 7.0 <= row.bound);
        assert_eq!(report.find("API", None, 1, 0).unwrap().pct_error, 0.0);
        assert!(report.to_csv().starts_with("method,rho,round,state,value,pct_error,bound\nSPI,1,1,0,-7.62437,"));
    }
}
