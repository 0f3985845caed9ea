//! Exact solution of zero-sum matrix games.
//!
//! Orientation: the row player (protagonist) minimizes `pi^T Q mu`, the column
//! player (adversary) maximizes it. The row player's strategy comes from
//!
//! ```text
//! min v   s.t.  sum_a pi(a) Q[a][u] <= v  for all u,  sum_a pi(a) = 1,  pi >= 0
//! ```
//!
//! and the column player's from the dual program
//!
//! ```text
//! max w   s.t.  sum_u mu(u) Q[a][u] >= w  for all a,  sum_u mu(u) = 1,  mu >= 0
//! ```
//!
//! Both are solved independently so their optimal values certify each other.
//! NE strategies need not be unique; the value always is.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simplex::{self, Constraint, LpError, Relation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixGameError {
    #[error("payoff matrix contains NaN or infinite entries")]
    DegenerateInput,
    #[error("payoff matrix is empty or ragged")]
    BadShape,
    #[error("linear program failed: {0}")]
    Lp(#[from] LpError),
}

/// Dense row-major payoff matrix `Q[a][u]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<f64>>", try_from = "Vec<Vec<f64>>")]
pub struct PayoffMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl PayoffMatrix {
    pub fn from_flat(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MatrixGameError> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(MatrixGameError::BadShape);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MatrixGameError> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(MatrixGameError::BadShape);
        }
        Self::from_flat(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, a: usize, u: usize) -> f64 {
        self.data[a * self.cols + u]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(|c| c.to_vec()).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `sum_a pi(a) Q[a][u]` for every column.
    pub fn row_mix(&self, pi: &[f64]) -> Vec<f64> {
        (0..self.cols)
            .map(|u| (0..self.rows).map(|a| pi[a] * self.get(a, u)).sum())
            .collect()
    }

    /// `sum_u Q[a][u] mu(u)` for every row.
    pub fn col_mix(&self, mu: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|a| (0..self.cols).map(|u| self.get(a, u) * mu[u]).sum())
            .collect()
    }

    /// Upper value in pure strategies, `min_a max_u Q`, with its first minimizing row.
    pub fn pure_minimax(&self) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for a in 0..self.rows {
            let m = (0..self.cols).map(|u| self.get(a, u)).fold(f64::NEG_INFINITY, f64::max);
            if m < best.1 {
                best = (a, m);
            }
        }
        best
    }

    /// Lower value in pure strategies, `max_u min_a Q`, with its first maximizing column.
    pub fn pure_maximin(&self) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for u in 0..self.cols {
            let m = (0..self.rows).map(|a| self.get(a, u)).fold(f64::INFINITY, f64::min);
            if m > best.1 {
                best = (u, m);
            }
        }
        best
    }
}

impl From<PayoffMatrix> for Vec<Vec<f64>> {
    fn from(m: PayoffMatrix) -> Self {
        m.to_rows()
    }
}

impl TryFrom<Vec<Vec<f64>>> for PayoffMatrix {
    type Error = MatrixGameError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        PayoffMatrix::from_rows(&rows)
    }
}

/// Mixed Nash equilibrium of a matrix game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixGameSolution {
    pub row_strategy: Vec<f64>,
    pub col_strategy: Vec<f64>,
    pub value: f64,
    /// Optimal value of the row player's program.
    pub primal_value: f64,
    /// Optimal value of the column player's program.
    pub dual_value: f64,
    pub is_pure: bool,
    pub slackness_max_violation: f64,
}

fn one_hot(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

fn clean_distribution(x: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = x.iter().map(|&v| if v < 0.0 { 0.0 } else { v }).collect();
    let s: f64 = clipped.iter().sum();
    clipped.iter().map(|v| v / s).collect()
}

/// Solves the game, returning equilibrium strategies and value.
///
/// A pure saddle point is returned directly when one exists; otherwise the
/// payoffs are mapped affinely into `[1, 2]` and both linear programs are solved.
pub fn solve_matrix_game(q: &PayoffMatrix) -> Result<MatrixGameSolution, MatrixGameError> {
    if q.data.iter().any(|v| !v.is_finite()) {
        return Err(MatrixGameError::DegenerateInput);
    }
    let (n, m) = (q.rows, q.cols);

    let (a_star, upper) = q.pure_minimax();
    let (u_star, lower) = q.pure_maximin();
    if upper == lower {
        let mut sol = MatrixGameSolution {
            row_strategy: one_hot(n, a_star),
            col_strategy: one_hot(m, u_star),
            value: upper,
            primal_value: upper,
            dual_value: lower,
            is_pure: true,
            slackness_max_violation: 0.0,
        };
        sol.slackness_max_violation = verify_slackness(q, &sol);
        return Ok(sol);
    }

    let lo = q.data.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = q.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let scaled = q.map(|v| (v - lo) / range + 1.0);

    // Row player: variables (pi_1..pi_n, v).
    let mut cons = Vec::with_capacity(m + 1);
    for u in 0..m {
        let mut coeffs: Vec<f64> = (0..n).map(|a| scaled.get(a, u)).collect();
        coeffs.push(-1.0);
        cons.push(Constraint {
            coeffs,
            relation: Relation::Le,
            rhs: 0.0,
        });
    }
    let mut sum_row = vec![1.0; n];
    sum_row.push(0.0);
    cons.push(Constraint {
        coeffs: sum_row,
        relation: Relation::Eq,
        rhs: 1.0,
    });
    let mut obj = vec![0.0; n];
    obj.push(1.0);
    let primal = simplex::minimize(&obj, &cons)?;

    // Column player: variables (mu_1..mu_m, w), maximize w.
    let mut cons = Vec::with_capacity(n + 1);
    for a in 0..n {
        let mut coeffs: Vec<f64> = (0..m).map(|u| scaled.get(a, u)).collect();
        coeffs.push(-1.0);
        cons.push(Constraint {
            coeffs,
            relation: Relation::Ge,
            rhs: 0.0,
        });
    }
    let mut sum_col = vec![1.0; m];
    sum_col.push(0.0);
    cons.push(Constraint {
        coeffs: sum_col,
        relation: Relation::Eq,
        rhs: 1.0,
    });
    let mut obj = vec![0.0; m];
    obj.push(-1.0);
    let dual = simplex::minimize(&obj, &cons)?;

    let unscale = |v: f64| (v - 1.0) * range + lo;
    let primal_value = unscale(primal.x[n]);
    let dual_value = unscale(dual.x[m]);
    let mut sol = MatrixGameSolution {
        row_strategy: clean_distribution(&primal.x[..n]),
        col_strategy: clean_distribution(&dual.x[..m]),
        value: primal_value,
        primal_value,
        dual_value,
        is_pure: false,
        slackness_max_violation: 0.0,
    };
    sol.is_pure = sol.row_strategy.iter().chain(&sol.col_strategy).all(|&p| p == 0.0 || p == 1.0);
    sol.slackness_max_violation = verify_slackness(q, &sol);
    Ok(sol)
}

/// Largest complementary-slackness residual of a candidate solution:
/// `mu(u) * (pi^T Q[:,u] - value)` over columns and `pi(a) * (Q[a,:] mu - value)` over rows.
pub fn verify_slackness(q: &PayoffMatrix, sol: &MatrixGameSolution) -> f64 {
    let by_col = q.row_mix(&sol.row_strategy);
    let by_row = q.col_mix(&sol.col_strategy);
    let cols = sol
        .col_strategy
        .iter()
        .zip(&by_col)
        .map(|(mu, x)| (mu * (x - sol.value)).abs());
    let rows = sol
        .row_strategy
        .iter()
        .zip(&by_row)
        .map(|(pi, x)| (pi * (x - sol.value)).abs());
    cols.chain(rows).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> PayoffMatrix {
        PayoffMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn printed_pure_equilibria() {
        let s = solve_matrix_game(&m(&[&[-8.25, -7.75], &[-7.25, -6.25]])).unwrap();
        assert!(s.is_pure);
        assert_eq!(s.row_strategy, vec![1.0, 0.0]);
        assert_eq!(s.col_strategy, vec![0.0, 1.0]);
        assert_eq!(s.value, -7.75);
        assert!(verify_slackness(&m(&[&[-8.25, -7.75], &[-7.25, -6.25]]), &s) < 1e-10);

        let s = solve_matrix_game(&m(&[&[-6.0, -7.0], &[-5.0, -4.0]])).unwrap();
        assert_eq!((s.row_strategy[0], s.col_strategy[0], s.value), (1.0, 1.0, -6.0));

        let s = solve_matrix_game(&m(&[&[-12.0, -9.0], &[-11.0, -10.0]])).unwrap();
        assert_eq!((s.row_strategy[1], s.col_strategy[1], s.value), (1.0, 1.0, -10.0));
    }

    #[test]
    fn matching_pennies() {
        let q = m(&[&[1.0, -1.0], &[-1.0, 1.0]]);
        let s = solve_matrix_game(&q).unwrap();
        assert!(!s.is_pure);
        for p in s.row_strategy.iter().chain(&s.col_strategy) {
            assert!((p - 0.5).abs() < 1e-12);
        }
        assert!(s.value.abs() < 1e-12);
        assert!(verify_slackness(&q, &s) < 1e-10);
    }

    #[test]
    fn perturbed_strategy_violates_slackness() {
        let q = m(&[&[-8.25, -7.75], &[-7.25, -6.25]]);
        let mut s = solve_matrix_game(&q).unwrap();
        s.row_strategy = vec![1.0 / 1.1, 0.1 / 1.1];
        assert!(verify_slackness(&q, &s) > 0.01);
    }

    #[test]
    fn rejects_nan() {
        let q = m(&[&[f64::NAN, 0.0]]);
        assert_eq!(solve_matrix_game(&q).unwrap_err(), MatrixGameError::DegenerateInput);
    }

    #[test]
    fn rock_paper_scissors() {
        let q = m(&[&[0.0, 1.0, -1.0], &[-1.0, 0.0, 1.0], &[1.0, -1.0, 0.0]]);
        let s = solve_matrix_game(&q).unwrap();
        for p in s.row_strategy.iter().chain(&s.col_strategy) {
            assert!((p - 1.0 / 3.0).abs() < 1e-10);
        }
        assert!(s.value.abs() < 1e-10);
        assert!((s.primal_value - s.dual_value).abs() < 1e-10);
    }

    #[test]
    fn json_shape() {
        let q = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(serde_json::to_string(&q).unwrap(), "[[1.0,2.0],[3.0,4.0]]");
    }
}
