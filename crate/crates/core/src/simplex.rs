//! Dense two-phase tableau simplex with Bland's rule.
//!
//! Solves `min c^T x` subject to `A x (<=, >=, =) b`, `x >= 0`. Meant for the
//! small programs that come out of matrix games, not for sparse or large LPs.

use thiserror::Error;

const EPS: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("constraint {0} has the wrong number of coefficients")]
    Shape(usize),
    #[error("pivot limit exceeded")]
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

struct Tableau {
    // m constraint rows followed by the objective row; last column is the rhs.
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn rhs_col(&self) -> usize {
        self.width - 1
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Runs Bland-rule pivots on the objective row, restricted to `allowed` columns.
    fn optimize(&mut self, allowed: usize, pivots: &mut usize) -> Result<(), LpError> {
        let m = self.basis.len();
        let rhs = self.rhs_col();
        let limit = 50_000;
        loop {
            let obj = &self.rows[m];
            let Some(enter) = (0..allowed).find(|&j| obj[j] < -EPS) else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.rows[i][enter];
                if a > EPS {
                    let ratio = self.rows[i][rhs] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - EPS || (ratio <= lr + EPS && self.basis[i] < self.basis[li]) {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Err(LpError::Unbounded);
            };
            self.pivot(r, enter);
            *pivots += 1;
            if *pivots > limit {
                return Err(LpError::IterationLimit);
            }
        }
    }
}

/// Minimizes `objective . x` over the constraints with `x >= 0`.
pub fn minimize(objective: &[f64], constraints: &[Constraint]) -> Result<LpSolution, LpError> {
    let n = objective.len();
    let m = constraints.len();
    for (i, c) in constraints.iter().enumerate() {
        if c.coeffs.len() != n {
            return Err(LpError::Shape(i));
        }
    }

    // Normalize to non-negative rhs.
    let rows: Vec<(Vec<f64>, Relation, f64)> = constraints
        .iter()
        .map(|c| {
            if c.rhs < 0.0 {
                let rel = match c.relation {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
                (c.coeffs.iter().map(|v| -v).collect(), rel, -c.rhs)
            } else {
                (c.coeffs.clone(), c.relation, c.rhs)
            }
        })
        .collect();

    let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Relation::Le).count();
    let art_start = n + n_slack;
    let width = art_start + n_art + 1;

    let mut tab = Tableau {
        rows: vec![vec![0.0; width]; m + 1],
        basis: vec![0; m],
        width,
    };
    let mut slack = n;
    let mut art = art_start;
    for (i, (coeffs, rel, rhs)) in rows.iter().enumerate() {
        tab.rows[i][..n].copy_from_slice(coeffs);
        tab.rows[i][width - 1] = *rhs;
        match rel {
            Relation::Le => {
                tab.rows[i][slack] = 1.0;
                tab.basis[i] = slack;
                slack += 1;
            }
            Relation::Ge => {
                tab.rows[i][slack] = -1.0;
                slack += 1;
                tab.rows[i][art] = 1.0;
                tab.basis[i] = art;
                art += 1;
            }
            Relation::Eq => {
                tab.rows[i][art] = 1.0;
                tab.basis[i] = art;
                art += 1;
            }
        }
    }

    let mut pivots = 0;
    if n_art > 0 {
        // Phase 1: minimize the sum of artificials, expressed in non-basic terms.
        let mut obj = vec![0.0; width];
        for i in 0..m {
            if tab.basis[i] >= art_start {
                for (o, v) in obj.iter_mut().zip(&tab.rows[i]) {
                    *o -= v;
                }
            }
        }
        for o in obj[art_start..width - 1].iter_mut() {
            *o = 0.0;
        }
        tab.rows[m] = obj;
        tab.optimize(width - 1, &mut pivots)?;
        let infeasibility = -tab.rows[m][width - 1];
        let scale = rows.iter().map(|r| r.2).fold(1.0, f64::max);
        if infeasibility > 1e-9 * scale {
            return Err(LpError::Infeasible);
        }
        // Drive remaining artificials out of the basis; drop redundant rows.
        let mut i = 0;
        while i < tab.basis.len() {
            if tab.basis[i] >= art_start {
                if let Some(c) = (0..art_start).find(|&j| tab.rows[i][j].abs() > 1e-9) {
                    tab.pivot(i, c);
                    pivots += 1;
                    i += 1;
                } else {
                    tab.rows.remove(i);
                    tab.basis.remove(i);
                }
            } else {
                i += 1;
            }
        }
    }

    // Phase 2 objective row: c_j minus c_B B^-1 A_j.
    let m = tab.basis.len();
    let mut obj = vec![0.0; width];
    obj[..n].copy_from_slice(objective);
    for i in 0..m {
        let b = tab.basis[i];
        let cb = if b < n { objective[b] } else { 0.0 };
        if cb != 0.0 {
            for (o, v) in obj.iter_mut().zip(&tab.rows[i]) {
                *o -= cb * v;
            }
        }
    }
    if tab.rows.len() == m {
        tab.rows.push(obj);
    } else {
        tab.rows[m] = obj;
    }
    tab.optimize(art_start, &mut pivots)?;

    let mut x = vec![0.0; n];
    for i in 0..m {
        if tab.basis[i] < n {
            x[tab.basis[i]] = tab.rows[i][width - 1];
        }
    }
    let objective_value = objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution {
        x,
        objective: objective_value,
        pivots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(coeffs: &[f64], relation: Relation, rhs: f64) -> Constraint {
        Constraint {
            coeffs: coeffs.to_vec(),
            relation,
            rhs,
        }
    }

    #[test]
    fn textbook_max_problem() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18  ->  36 at (2, 6)
        let sol = minimize(
            &[-3.0, -5.0],
            &[
                c(&[1.0, 0.0], Relation::Le, 4.0),
                c(&[0.0, 2.0], Relation::Le, 12.0),
                c(&[3.0, 2.0], Relation::Le, 18.0),
            ],
        )
        .unwrap();
        assert!((sol.objective + 36.0).abs() < 1e-10);
        assert!((sol.x[0] - 2.0).abs() < 1e-10 && (sol.x[1] - 6.0).abs() < 1e-10);
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + y, x + y = 1, x >= 0.3 -> 1
        let sol = minimize(
            &[1.0, 2.0],
            &[c(&[1.0, 1.0], Relation::Eq, 1.0), c(&[1.0, 0.0], Relation::Ge, 0.3)],
        )
        .unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-12);
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let inf = minimize(
            &[1.0],
            &[c(&[1.0], Relation::Le, 1.0), c(&[1.0], Relation::Ge, 2.0)],
        );
        assert_eq!(inf.unwrap_err(), LpError::Infeasible);
        let unb = minimize(&[-1.0], &[c(&[1.0], Relation::Ge, 1.0)]);
        assert_eq!(unb.unwrap_err(), LpError::Unbounded);
    }

    #[test]
    fn redundant_equalities() {
        let sol = minimize(
            &[1.0, 1.0],
            &[c(&[1.0, 1.0], Relation::Eq, 2.0), c(&[2.0, 2.0], Relation::Eq, 4.0)],
        )
        .unwrap();
        assert!((sol.objective - 2.0).abs() < 1e-12);
    }
}
