//! Python bindings: the tabular game and its solvers, the matrix-game LP, the
//! WLSE operator, the vehicle model, and training/evaluation of the agents.
//!
//! Policies cross the boundary as nested lists `[state][action]`; trained
//! agents cross as checkpoint JSON strings.

use mgsmooth::bellman::{self, Operator, WlseConfig};
use mgsmooth::gradcheck;
use mgsmooth::pathtrack::{self, Control, PathMode, PathTrackEnv, VehicleParams, VehicleState};
use mgsmooth::saac::{self, Agent, AgentCheckpoint, TrainConfig};
use mgsmooth::solvers::{self, SolveHistory, SolveOptions, TerminalStatus};
use mgsmooth::two_state;
use mgsmooth::{MarkovGame, PayoffMatrix, TabularPolicy, ValueTable};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn policy(rows: Vec<Vec<f64>>) -> PyResult<TabularPolicy> {
    TabularPolicy::new(rows).map_err(value_err)
}

fn smoothing(rho: f64, uniform: bool) -> PyResult<WlseConfig> {
    if uniform { WlseConfig::uniform(rho) } else { WlseConfig::adversary(rho) }.map_err(value_err)
}

fn status_name(s: TerminalStatus) -> String {
    match s {
        TerminalStatus::Converged => "converged".into(),
        TerminalStatus::CycleDetected { period } => format!("cycle:{period}"),
        TerminalStatus::MaxRounds => "max_rounds".into(),
    }
}

/// Zero-sum Markov game with finite states and actions.
#[pyclass(name = "MarkovGame", module = "mgsmooth_py")]
struct PyMarkovGame {
    inner: MarkovGame,
}

#[pymethods]
impl PyMarkovGame {
    /// The two-state example on which naive policy iteration oscillates.
    #[staticmethod]
    fn two_state() -> Self {
        Self {
            inner: MarkovGame::two_state_counterexample(),
        }
    }

    /// `transition[s][a][u][s']`, `reward[s][a][u]`.
    #[new]
    fn new(transition: Vec<Vec<Vec<Vec<f64>>>>, reward: Vec<Vec<Vec<f64>>>, gamma: f64) -> PyResult<Self> {
        let ns = transition.len();
        let na = transition.first().map_or(0, Vec::len);
        let nu = transition.first().and_then(|t| t.first()).map_or(0, Vec::len);
        let inner = mgsmooth::game::make_game(ns, na, nu, &transition, &reward, gamma).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: MarkovGame::from_json(text).map_err(value_err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    #[getter]
    fn n_protagonist_actions(&self) -> usize {
        self.inner.n_protagonist_actions()
    }

    #[getter]
    fn n_adversary_actions(&self) -> usize {
        self.inner.n_adversary_actions()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma()
    }

    /// Fixed point of one evaluation operator. Without `adversary` the exact
    /// worst case is used; with it and no `rho` the joint value; with both the
    /// smoothed value.
    #[pyo3(signature = (protagonist, adversary=None, rho=None, uniform=false, tol=1e-10, max_iter=100_000))]
    fn evaluate(
        &self,
        protagonist: Vec<Vec<f64>>,
        adversary: Option<Vec<Vec<f64>>>,
        rho: Option<f64>,
        uniform: bool,
        tol: f64,
        max_iter: usize,
    ) -> PyResult<Vec<f64>> {
        let pi = policy(protagonist)?;
        let mu = adversary.map(policy).transpose()?;
        let op = match (&mu, rho) {
            (None, None) => Operator::WorstCase { pi: &pi },
            (Some(mu), None) => Operator::Joint { pi: &pi, mu },
            (Some(mu), Some(r)) => Operator::Wlse {
                pi: &pi,
                mu,
                cfg: smoothing(r, uniform)?,
            },
            (None, Some(_)) => return Err(PyValueError::new_err("smoothing needs adversary weights")),
        };
        let (v, trace) = bellman::pev_fixed_point(&self.inner, &op, None, tol, max_iter).map_err(runtime_err)?;
        trace.require_converged().map_err(runtime_err)?;
        Ok(v.values)
    }

    /// Game matrix `Q[a][u]` at `state` built from `values`.
    fn q_matrix(&self, values: Vec<f64>, state: usize) -> PyResult<Vec<Vec<f64>>> {
        if values.len() != self.inner.n_states() || state >= self.inner.n_states() {
            return Err(PyValueError::new_err("values or state do not match the game"));
        }
        Ok(mgsmooth::game::joint_q_matrix(&self.inner, &ValueTable::from_values(values), state).to_rows())
    }

    /// Runs `"npi"`, `"api"` or `"spi"` policy iteration.
    #[pyo3(signature = (method, protagonist, adversary=None, rho=None, uniform=false, max_rounds=100))]
    #[allow(clippy::too_many_arguments)]
    fn solve<'py>(
        &self,
        py: Python<'py>,
        method: &str,
        protagonist: Vec<Vec<f64>>,
        adversary: Option<Vec<Vec<f64>>>,
        rho: Option<f64>,
        uniform: bool,
        max_rounds: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let pi = policy(protagonist)?;
        let opts = SolveOptions::default().with_max_rounds(max_rounds);
        let need_mu = || adversary.clone().map(policy).transpose()?.ok_or_else(|| PyValueError::new_err("adversary required"));
        let h: SolveHistory = match method.to_ascii_lowercase().as_str() {
            "api" => solvers::run_api(&self.inner, &pi, &opts),
            "npi" => solvers::run_npi(&self.inner, &pi, &need_mu()?, &opts),
            "spi" => {
                let r = rho.ok_or_else(|| PyValueError::new_err("spi needs rho"))?;
                solvers::run_spi(&self.inner, &pi, &need_mu()?, smoothing(r, uniform)?, &opts)
            }
            other => return Err(PyValueError::new_err(format!("unknown method `{other}`"))),
        }
        .map_err(runtime_err)?;
        let last = h.last();
        let d = PyDict::new(py);
        d.set_item("status", status_name(h.status))?;
        d.set_item("rounds", h.rounds.len())?;
        d.set_item("values", last.values.values.clone())?;
        d.set_item("protagonist", last.next_protagonist.rows().to_vec())?;
        d.set_item("adversary", last.next_adversary.rows().to_vec())?;
        d.set_item("value_series", (0..self.inner.n_states()).map(|s| h.value_series(s)).collect::<Vec<_>>())?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!(
            "MarkovGame(states={}, protagonist_actions={}, adversary_actions={}, gamma={})",
            self.inner.n_states(),
            self.inner.n_protagonist_actions(),
            self.inner.n_adversary_actions(),
            self.inner.gamma()
        )
    }
}

/// `(1/rho) log sum_i w_i exp(rho x_i)`.
#[pyfunction]
fn wlse(values: Vec<f64>, weights: Vec<f64>, rho: f64) -> PyResult<f64> {
    bellman::wlse(&values, &weights, rho).map_err(value_err)
}

/// Equilibrium of a matrix game; the row player minimizes.
#[pyfunction]
fn solve_matrix_game<'py>(py: Python<'py>, matrix: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyDict>> {
    let q = PayoffMatrix::from_rows(&matrix).map_err(value_err)?;
    let sol = mgsmooth::solve_matrix_game(&q).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("value", sol.value)?;
    d.set_item("row_strategy", sol.row_strategy)?;
    d.set_item("col_strategy", sol.col_strategy)?;
    d.set_item("is_pure", sol.is_pure)?;
    d.set_item("slackness", sol.slackness_max_violation)?;
    Ok(d)
}

/// Every two-state artifact as `{file name: content}`.
#[pyfunction]
fn two_state_files<'py>(py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
    let report = two_state::run_two_state().map_err(runtime_err)?;
    let d = PyDict::new(py);
    for (name, content) in report.files() {
        d.set_item(name, content)?;
    }
    Ok(d)
}

fn parse_mode(mode: &str) -> PyResult<PathMode> {
    match mode {
        "sine" => Ok(PathMode::Sine),
        "straight" => Ok(PathMode::Straight),
        other => Err(PyValueError::new_err(format!("unknown path mode `{other}`"))),
    }
}

fn state_from(s: [f64; 6]) -> VehicleState {
    VehicleState::from_array(s)
}

/// One step of the vehicle model; `state` is
/// `[p_x, delta_y, delta_phi, v_x, v_y, omega]`.
#[pyfunction]
#[pyo3(signature = (state, steer, accel, dist=0.0, mode="sine"))]
fn dynamics_step(state: [f64; 6], steer: f64, accel: f64, dist: f64, mode: &str) -> PyResult<[f64; 6]> {
    let next = pathtrack::dynamics_step(
        &state_from(state),
        Control { steer, accel },
        dist,
        &VehicleParams::default(),
        parse_mode(mode)?,
    )
    .map_err(runtime_err)?;
    Ok(next.to_array())
}

/// Stage cost of a state and protagonist action.
#[pyfunction]
fn stage_cost(state: [f64; 6], steer: f64, accel: f64) -> f64 {
    pathtrack::reward(&state_from(state), Control { steer, accel })
}

fn config(algorithm: &str, seed: u64, overrides: Option<Vec<(String, String)>>) -> PyResult<TrainConfig> {
    let mut cfg = TrainConfig::desk();
    cfg.set("algorithm", algorithm).map_err(value_err)?;
    for (k, v) in overrides.unwrap_or_default() {
        cfg.set(&k, &v).map_err(value_err)?;
    }
    cfg.seed = seed;
    cfg.validate().map_err(value_err)?;
    Ok(cfg)
}

/// Trains one agent from the desk preset. `overrides` are `(key, value)`
/// pairs as accepted by the CLI's `--set`.
#[pyfunction]
#[pyo3(signature = (algorithm="saac", seed=0, overrides=None))]
fn train<'py>(
    py: Python<'py>,
    algorithm: &str,
    seed: u64,
    overrides: Option<Vec<(String, String)>>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config(algorithm, seed, overrides)?;
    let env = PathTrackEnv::default();
    let out = py.detach(|| saac::train(&cfg, &env)).map_err(runtime_err)?;
    let d = PyDict::new(py);
    d.set_item("metrics_csv", saac::metrics_csv(&out.metrics, false))?;
    d.set_item("tar", out.metrics.iter().map(|m| m.tar).collect::<Vec<_>>())?;
    d.set_item("checkpoint", serde_json::to_string(&out.agent.checkpoint()).map_err(runtime_err)?)?;
    d.set_item("best_checkpoint", serde_json::to_string(&out.best).map_err(runtime_err)?)?;
    d.set_item("best_tar", out.best_tar)?;
    Ok(d)
}

/// Deterministic evaluation of a checkpoint under a constant disturbance.
#[pyfunction]
#[pyo3(signature = (checkpoint, dist=0.0, episodes=5, steps=150, seed=0))]
fn evaluate<'py>(
    py: Python<'py>,
    checkpoint: &str,
    dist: f64,
    episodes: usize,
    steps: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let env = PathTrackEnv::default();
    let ck: AgentCheckpoint = serde_json::from_str(checkpoint).map_err(value_err)?;
    let agent = Agent::from_checkpoint(ck, &env.bounds).map_err(value_err)?;
    let r = saac::evaluate(&agent, &env, episodes, steps, seed, dist).map_err(runtime_err)?;
    let d = PyDict::new(py);
    d.set_item("tar", r.tar)?;
    d.set_item("pos_err", r.pos_err)?;
    d.set_item("head_err", r.head_err)?;
    Ok(d)
}

/// Full finite-difference suite as CSV; raises if any check fails.
#[pyfunction]
#[pyo3(signature = (seed=0))]
fn run_gradcheck(py: Python<'_>, seed: u64) -> PyResult<String> {
    let report = py.detach(|| gradcheck::run_all(seed)).map_err(runtime_err)?;
    if report.all_passed() {
        Ok(report.to_csv())
    } else {
        Err(PyRuntimeError::new_err(format!("gradient checks failed:\n{}", report.to_csv())))
    }
}

#[pymodule]
fn mgsmooth_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMarkovGame>()?;
    m.add_function(wrap_pyfunction!(wlse, m)?)?;
    m.add_function(wrap_pyfunction!(solve_matrix_game, m)?)?;
    m.add_function(wrap_pyfunction!(two_state_files, m)?)?;
    m.add_function(wrap_pyfunction!(dynamics_step, m)?)?;
    m.add_function(wrap_pyfunction!(stage_cost, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(run_gradcheck, m)?)?;
    Ok(())
}
