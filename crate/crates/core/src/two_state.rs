//! The two-state counterexample game worked end to end: smoothed versus exact
//! policy evaluation for the first two policy pairs, the value traces of each
//! evaluation, every game matrix built during improvement, the oscillation of
//! naive policy iteration, and the smoothing error bounds.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bellman::{self, Operator, WlseConfig};
use crate::game::{joint_q_matrix, MarkovGame, TabularPolicy, ValueTable};
use crate::matrix_game::{solve_matrix_game, MatrixGameSolution, PayoffMatrix};
use crate::report::fmt_sig;
use crate::solvers::{
    compare_solvers, run_api, run_npi, run_spi, ComparisonReport, EvalPoint, Method, SolveHistory,
    SolveOptions, SolverError, TerminalStatus,
};

/// Smoothing factors compared against the exact evaluation.
pub const RHO_LIST: [f64; 4] = [1.0, 5.0, 10.0, 20.0];
/// Smoothing factor of the uniform-weight variant.
pub const UNIFORM_RHO: f64 = 10.0;
/// Adversary weights of the initial pair, used in both states.
pub const INITIAL_ADVERSARY: [f64; 2] = [0.45, 0.55];

/// Initial protagonist: even odds in both states.
pub fn initial_protagonist() -> TabularPolicy {
    TabularPolicy::new(vec![vec![0.5, 0.5]; 2]).expect("valid rows")
}

pub fn initial_adversary() -> TabularPolicy {
    TabularPolicy::new(vec![INITIAL_ADVERSARY.to_vec(); 2]).expect("valid rows")
}

/// Pair extracted by the first improvement: `a1` against `u2`.
pub fn improved_pair() -> (TabularPolicy, TabularPolicy) {
    (
        TabularPolicy::deterministic(2, &[0, 0]).expect("valid action"),
        TabularPolicy::deterministic(2, &[1, 1]).expect("valid action"),
    )
}

/// Starting pair for the naive iteration: `a1` against `u1`.
pub fn oscillation_start() -> (TabularPolicy, TabularPolicy) {
    (
        TabularPolicy::deterministic(2, &[0, 0]).expect("valid action"),
        TabularPolicy::deterministic(2, &[0, 0]).expect("valid action"),
    )
}

/// One game matrix met during improvement, with its solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub method: String,
    pub rho: Option<f64>,
    pub round: usize,
    pub state: usize,
    /// Values the matrix was built from.
    pub values: Vec<f64>,
    pub matrix: Vec<Vec<f64>>,
    pub solution: MatrixGameSolution,
}

/// Smoothed-versus-exact gap for the initial pair at the first state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub method: String,
    pub rho: f64,
    pub value: f64,
    pub exact: f64,
    pub abs_error: f64,
    /// Evaluation bound `|log w_max| / (rho (1 - gamma))`.
    pub evaluation_bound: f64,
    /// Optimality bound `2 gamma |log w_max| / (rho (1 - gamma)^3)`.
    pub optimality_bound: f64,
}

impl BoundRow {
    pub fn holds(&self) -> bool {
        self.abs_error <= self.evaluation_bound
    }
}

/// Per-iteration value of the first state during one policy evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PevSeries {
    pub round: usize,
    pub method: String,
    pub rho: Option<f64>,
    pub values: Vec<f64>,
}

/// The oscillation record of naive policy iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub status: TerminalStatus,
    pub period: Option<usize>,
    /// First-state joint value of each evaluated pair.
    pub values: Vec<f64>,
    pub history: SolveHistory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStateReport {
    pub initial: ComparisonReport,
    pub improved: ComparisonReport,
    pub pev: Vec<PevSeries>,
    pub cycle: CycleRecord,
    pub api: SolveHistory,
    pub matrices: Vec<MatrixRecord>,
    pub bounds: Vec<BoundRow>,
}

fn matrix_records(h: &SolveHistory, rho: Option<f64>) -> Vec<MatrixRecord> {
    let label = h.method.label();
    h.rounds
        .iter()
        .flat_map(|r| {
            r.matrices
                .iter()
                .enumerate()
                .map(move |(s, m)| (r, s, m))
        })
        .map(|(r, s, m)| MatrixRecord {
            method: label.to_string(),
            rho,
            round: r.round,
            state: s,
            values: r.values.values.clone(),
            matrix: m.to_rows(),
            solution: solve_matrix_game(m).expect("finite matrix"),
        })
        .collect()
}

fn pev_series(
    game: &MarkovGame,
    round: usize,
    pi: &TabularPolicy,
    mu: &TabularPolicy,
    opts: &SolveOptions,
) -> Result<Vec<PevSeries>, SolverError> {
    let mut out = Vec::new();
    let configs = RHO_LIST
        .iter()
        .map(|&r| WlseConfig::adversary(r))
        .chain(std::iter::once(WlseConfig::uniform(UNIFORM_RHO)));
    for cfg in configs {
        let cfg = cfg?;
        let (_, trace) = bellman::pev_fixed_point(game, &Operator::Wlse { pi, mu, cfg }, None, opts.pev_tol, opts.pev_max_iter)?;
        out.push(PevSeries {
            round,
            method: Method::Spi(cfg).label().to_string(),
            rho: Some(cfg.rho),
            values: trace.snapshots.iter().map(|v| v[0]).collect(),
        });
    }
    let (_, trace) = bellman::pev_fixed_point(game, &Operator::WorstCase { pi }, None, opts.pev_tol, opts.pev_max_iter)?;
    out.push(PevSeries {
        round,
        method: "API".into(),
        rho: None,
        values: trace.snapshots.iter().map(|v| v[0]).collect(),
    });
    Ok(out)
}

/// Runs every two-state experiment.
pub fn run_two_state() -> Result<TwoStateReport, SolverError> {
    let game = MarkovGame::two_state_counterexample();
    let opts = SolveOptions::default();
    let (pi0, mu0) = (initial_protagonist(), initial_adversary());
    let (pi1, mu1) = improved_pair();
    let point = |round, protagonist: &TabularPolicy, adversary: &TabularPolicy| EvalPoint {
        round,
        protagonist: protagonist.clone(),
        adversary: adversary.clone(),
    };
    let initial = compare_solvers(&game, &[point(0, &pi0, &mu0)], &RHO_LIST, &[UNIFORM_RHO], &opts)?;
    let improved = compare_solvers(&game, &[point(1, &pi1, &mu1)], &RHO_LIST, &[UNIFORM_RHO], &opts)?;

    let mut pev = pev_series(&game, 0, &pi0, &mu0, &opts)?;
    pev.extend(pev_series(&game, 1, &pi1, &mu1, &opts)?);

    let (npi_pi, npi_mu) = oscillation_start();
    let npi = run_npi(&game, &npi_pi, &npi_mu, &opts)?;
    let period = match npi.status {
        TerminalStatus::CycleDetected { period } => Some(period),
        _ => None,
    };
    let cycle = CycleRecord {
        status: npi.status,
        period,
        values: npi.value_series(0),
        history: npi.clone(),
    };

    let api = run_api(&game, &pi0, &opts)?;
    let mut matrices = matrix_records(&api, None);
    for &rho in &RHO_LIST {
        let h = run_spi(&game, &pi0, &mu0, WlseConfig::adversary(rho)?, &opts)?;
        matrices.extend(matrix_records(&h, Some(rho)));
    }
    let h = run_spi(&game, &pi0, &mu0, WlseConfig::uniform(UNIFORM_RHO)?, &opts)?;
    matrices.extend(matrix_records(&h, Some(UNIFORM_RHO)));
    matrices.extend(matrix_records(&npi, None));

    let bounds = bound_rows(&game, &initial)?;
    Ok(TwoStateReport {
        initial,
        improved,
        pev,
        cycle,
        api,
        matrices,
        bounds,
    })
}

fn bound_rows(game: &MarkovGame, initial: &ComparisonReport) -> Result<Vec<BoundRow>, SolverError> {
    let gamma = game.gamma();
    let exact = initial
        .rows
        .iter()
        .find(|r| r.method == "API" && r.state == 0)
        .map(|r| r.value)
        .expect("exact row present");
    let mu0 = initial_adversary();
    let uniform = TabularPolicy::uniform(2, 2);
    let mut rows = Vec::new();
    for r in initial.rows.iter().filter(|r| r.state == 0 && r.method != "API") {
        let rho = r.rho.expect("smoothed rows carry rho");
        let weights = if r.method == "SPI" { &mu0 } else { &uniform };
        rows.push(BoundRow {
            method: r.method.clone(),
            rho,
            value: r.value,
            exact,
            abs_error: (r.value - exact).abs(),
            evaluation_bound: bellman::pev_error_bound(weights, rho, gamma)?,
            optimality_bound: bellman::optimality_error_bound(weights, rho, gamma)?,
        });
    }
    Ok(rows)
}

/// The game matrix at the first state built from `values`, with its solution.
pub fn first_state_game(values: &[f64]) -> (PayoffMatrix, MatrixGameSolution) {
    let game = MarkovGame::two_state_counterexample();
    let m = joint_q_matrix(&game, &ValueTable::from_values(values.to_vec()), 0);
    let sol = solve_matrix_game(&m).expect("finite matrix");
    (m, sol)
}

impl TwoStateReport {
    /// `method, rho, value, pct_error` at the first state.
    fn table_csv(report: &ComparisonReport) -> String {
        let mut out = String::from("method,rho,value,pct_error\n");
        for r in report.rows.iter().filter(|r| r.state == 0) {
            let rho = r.rho.map(fmt_sig).unwrap_or_else(|| "-".into());
            let _ = writeln!(out, "{},{},{},{}", r.method, rho, fmt_sig(r.value), fmt_sig(r.pct_error));
        }
        out
    }

    pub fn initial_table_csv(&self) -> String {
        Self::table_csv(&self.initial)
    }

    pub fn improved_table_csv(&self) -> String {
        Self::table_csv(&self.improved)
    }

    /// Long format: `round, method, rho, iteration, value`.
    pub fn pev_csv(&self) -> String {
        let mut out = String::from("round,method,rho,iteration,value\n");
        for s in &self.pev {
            let rho = s.rho.map(fmt_sig).unwrap_or_else(|| "-".into());
            for (k, v) in s.values.iter().enumerate() {
                let _ = writeln!(out, "{},{},{},{},{}", s.round, s.method, rho, k + 1, fmt_sig(*v));
            }
        }
        out
    }

    pub fn bounds_csv(&self) -> String {
        let mut out = String::from("method,rho,value,exact,abs_error,evaluation_bound,optimality_bound,holds\n");
        for b in &self.bounds {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                b.method,
                fmt_sig(b.rho),
                fmt_sig(b.value),
                fmt_sig(b.exact),
                fmt_sig(b.abs_error),
                fmt_sig(b.evaluation_bound),
                fmt_sig(b.optimality_bound),
                b.holds()
            );
        }
        out
    }

    pub fn cycle_json(&self) -> String {
        serde_json::to_string_pretty(&self.cycle).expect("record serializes")
    }

    pub fn matrices_json(&self) -> String {
        serde_json::to_string_pretty(&self.matrices).expect("records serialize")
    }

    /// Every artifact as `(file name, contents)`.
    pub fn files(&self) -> Vec<(&'static str, String)> {
        vec![
            ("table1.csv", self.initial_table_csv()),
            ("table2.csv", self.improved_table_csv()),
            ("pev_trace.csv", self.pev_csv()),
            ("npi_cycle.json", self.cycle_json()),
            ("matrices.json", self.matrices_json()),
            ("bounds.csv", self.bounds_csv()),
        ]
    }
}

/// `pct_error` of the first-state row for `method` and `rho`, if present.
pub fn first_state_row(report: &ComparisonReport, method: &str, rho: Option<f64>) -> Option<(f64, f64)> {
    report
        .rows
        .iter()
        .find(|r| r.method == method && r.rho == rho && r.state == 0)
        .map(|r| (r.value, r.pct_error))
}
