//! Finite zero-sum Markov games, tabular policies and value tables.
//!
//! The protagonist picks `a` and minimizes the discounted cost, the adversary
//! picks `u` and maximizes it. Transitions are stored densely as
//! `p(s' | s, a, u)` in `[s][a][u][s']` order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix_game::PayoffMatrix;

/// Tolerance accepted on input probability rows before renormalization.
pub const INPUT_PROB_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid distribution at {location}: {reason}")]
    InvalidDistribution { location: String, reason: String },
    #[error("discount factor {0} outside [0, 1)")]
    InvalidDiscount(f64),
    #[error("non-finite reward at (s={s}, a={a}, u={u})")]
    NonFiniteReward { s: usize, a: usize, u: usize },
    #[error("game has no states or no actions")]
    Empty,
    #[error("malformed game file: {0}")]
    Parse(String),
}

/// Checks a probability row against [`INPUT_PROB_TOL`] and returns it renormalized.
pub(crate) fn normalize_row(row: &[f64], location: impl Fn() -> String) -> Result<Vec<f64>, GameError> {
    if row.is_empty() {
        return Err(GameError::InvalidDistribution {
            location: location(),
            reason: "empty row".into(),
        });
    }
    let mut sum = 0.0;
    for &p in row {
        if !p.is_finite() || p < 0.0 {
            return Err(GameError::InvalidDistribution {
                location: location(),
                reason: format!("entry {p} is negative or non-finite"),
            });
        }
        sum += p;
    }
    if (sum - 1.0).abs() > INPUT_PROB_TOL {
        return Err(GameError::InvalidDistribution {
            location: location(),
            reason: format!("row sums to {sum}"),
        });
    }
    Ok(row.iter().map(|p| p / sum).collect())
}

/// A validated finite zero-sum Markov game. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovGame {
    n_states: usize,
    n_pa: usize,
    n_aa: usize,
    gamma: f64,
    transition: Vec<f64>,
    reward: Vec<f64>,
}

/// On-disk JSON layout of a game.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GameFile {
    pub n_states: usize,
    pub n_pa: usize,
    pub n_aa: usize,
    pub gamma: f64,
    pub transition: Vec<Vec<Vec<Vec<f64>>>>,
    pub reward: Vec<Vec<Vec<f64>>>,
}

/// Builds and validates a game from nested `[s][a][u][s']` / `[s][a][u]` tensors.
pub fn make_game(
    n_states: usize,
    n_pa: usize,
    n_aa: usize,
    transition: &[Vec<Vec<Vec<f64>>>],
    reward: &[Vec<Vec<f64>>],
    gamma: f64,
) -> Result<MarkovGame, GameError> {
    if n_states == 0 || n_pa == 0 || n_aa == 0 {
        return Err(GameError::Empty);
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(GameError::InvalidDiscount(gamma));
    }
    let dim = |what: &str, got: usize, want: usize| {
        if got == want {
            Ok(())
        } else {
            Err(GameError::DimensionMismatch(format!("{what}: expected {want}, got {got}")))
        }
    };
    dim("transition states", transition.len(), n_states)?;
    dim("reward states", reward.len(), n_states)?;

    let mut t = Vec::with_capacity(n_states * n_pa * n_aa * n_states);
    let mut r = Vec::with_capacity(n_states * n_pa * n_aa);
    for s in 0..n_states {
        dim("transition protagonist actions", transition[s].len(), n_pa)?;
        dim("reward protagonist actions", reward[s].len(), n_pa)?;
        for a in 0..n_pa {
            dim("transition adversary actions", transition[s][a].len(), n_aa)?;
            dim("reward adversary actions", reward[s][a].len(), n_aa)?;
            for u in 0..n_aa {
                let row = &transition[s][a][u];
                dim("transition next states", row.len(), n_states)?;
                t.extend(normalize_row(row, || format!("p(.|s={s}, a={a}, u={u})"))?);
                let rew = reward[s][a][u];
                if !rew.is_finite() {
                    return Err(GameError::NonFiniteReward { s, a, u });
                }
                r.push(rew);
            }
        }
    }
    Ok(MarkovGame {
        n_states,
        n_pa,
        n_aa,
        gamma,
        transition: t,
        reward: r,
    })
}

impl MarkovGame {
    /// The two-state counterexample on which naive policy iteration cycles.
    ///
    /// `s1` (index 0) is transient: `(a1,u1)`, `(a2,u1)`, `(a2,u2)` stay with
    /// costs -3, -2, -1; `(a1,u2)` costs -6 and stays with probability 1/3,
    /// otherwise moves to the absorbing zero-cost `s2` (index 1).
    ///
    /// The discount is 0.75, the only value consistent with every game matrix
    /// printed for this example.
    pub fn two_state_counterexample() -> MarkovGame {
        let stay = vec![1.0, 0.0];
        let absorb = vec![0.0, 1.0];
        let transition = vec![
            vec![
                vec![stay.clone(), vec![1.0 / 3.0, 2.0 / 3.0]],
                vec![stay.clone(), stay],
            ],
            vec![vec![absorb.clone(), absorb.clone()], vec![absorb.clone(), absorb]],
        ];
        let reward = vec![
            vec![vec![-3.0, -6.0], vec![-2.0, -1.0]],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        ];
        make_game(2, 2, 2, &transition, &reward, 0.75).expect("counterexample is a valid game")
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_protagonist_actions(&self) -> usize {
        self.n_pa
    }

    pub fn n_adversary_actions(&self) -> usize {
        self.n_aa
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize, u: usize) -> f64 {
        self.reward[(s * self.n_pa + a) * self.n_aa + u]
    }

    /// Next-state distribution `p(. | s, a, u)`.
    #[inline]
    pub fn transition_row(&self, s: usize, a: usize, u: usize) -> &[f64] {
        let start = ((s * self.n_pa + a) * self.n_aa + u) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    /// `r(s,a,u) + gamma * sum_s' p(s'|s,a,u) v(s')`.
    #[inline]
    pub fn backup(&self, s: usize, a: usize, u: usize, v: &[f64]) -> f64 {
        let row = self.transition_row(s, a, u);
        let mut ev = 0.0;
        for (p, x) in row.iter().zip(v) {
            ev += p * x;
        }
        self.reward(s, a, u) + self.gamma * ev
    }

    pub fn to_file(&self) -> GameFile {
        let mut transition = Vec::with_capacity(self.n_states);
        let mut reward = Vec::with_capacity(self.n_states);
        for s in 0..self.n_states {
            let mut ts = Vec::with_capacity(self.n_pa);
            let mut rs = Vec::with_capacity(self.n_pa);
            for a in 0..self.n_pa {
                ts.push((0..self.n_aa).map(|u| self.transition_row(s, a, u).to_vec()).collect());
                rs.push((0..self.n_aa).map(|u| self.reward(s, a, u)).collect());
            }
            transition.push(ts);
            reward.push(rs);
        }
        GameFile {
            n_states: self.n_states,
            n_pa: self.n_pa,
            n_aa: self.n_aa,
            gamma: self.gamma,
            transition,
            reward,
        }
    }

    pub fn from_file(file: &GameFile) -> Result<MarkovGame, GameError> {
        make_game(
            file.n_states,
            file.n_pa,
            file.n_aa,
            &file.transition,
            &file.reward,
            file.gamma,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("game serializes")
    }

    pub fn from_json(text: &str) -> Result<MarkovGame, GameError> {
        let file: GameFile = serde_json::from_str(text).map_err(|e| GameError::Parse(e.to_string()))?;
        MarkovGame::from_file(&file)
    }

    /// Re-runs construction-time validation on the stored tensors.
    pub fn revalidate(&self) -> Result<MarkovGame, GameError> {
        MarkovGame::from_file(&self.to_file())
    }
}

/// Per-state action distribution for one player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    probs: Vec<Vec<f64>>,
}

impl TabularPolicy {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, GameError> {
        if rows.is_empty() {
            return Err(GameError::Empty);
        }
        let width = rows[0].len();
        let mut probs = Vec::with_capacity(rows.len());
        for (s, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(GameError::DimensionMismatch(format!(
                    "policy row {s} has {} actions, expected {width}",
                    row.len()
                )));
            }
            probs.push(normalize_row(row, || format!("policy row {s}"))?);
        }
        Ok(Self { probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = 1.0 / n_actions as f64;
        Self {
            probs: vec![vec![p; n_actions]; n_states],
        }
    }

    /// Deterministic policy choosing `actions[s]` in state `s`.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self, GameError> {
        let mut probs = Vec::with_capacity(actions.len());
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(GameError::DimensionMismatch(format!(
                    "state {s}: action {a} out of range for {n_actions} actions"
                )));
            }
            let mut row = vec![0.0; n_actions];
            row[a] = 1.0;
            probs.push(row);
        }
        if probs.is_empty() {
            return Err(GameError::Empty);
        }
        Ok(Self { probs })
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    pub fn n_actions(&self) -> usize {
        self.probs[0].len()
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s][a]
    }

    /// Replaces one row; the row must already be a distribution.
    pub fn set_row(&mut self, s: usize, row: &[f64]) -> Result<(), GameError> {
        if row.len() != self.n_actions() {
            return Err(GameError::DimensionMismatch(format!(
                "row has {} actions, expected {}",
                row.len(),
                self.n_actions()
            )));
        }
        self.probs[s] = normalize_row(row, || format!("policy row {s}"))?;
        Ok(())
    }

    /// Largest probability in each state.
    pub fn row_max(&self) -> Vec<f64> {
        self.probs
            .iter()
            .map(|r| r.iter().cloned().fold(0.0, f64::max))
            .collect()
    }

    /// Max absolute difference over all entries.
    pub fn distance(&self, other: &TabularPolicy) -> f64 {
        self.probs
            .iter()
            .flatten()
            .zip(other.probs.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn check_shape(&self, n_states: usize, n_actions: usize) -> bool {
        self.n_states() == n_states && self.n_actions() == n_actions
    }
}

/// Per-state value estimate with the magnitude of the last update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub values: Vec<f64>,
    pub residual: f64,
}

impl ValueTable {
    pub fn zeros(n_states: usize) -> Self {
        Self {
            values: vec![0.0; n_states],
            residual: 0.0,
        }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values, residual: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, s: usize) -> f64 {
        self.values[s]
    }

    pub fn sup_distance(&self, other: &ValueTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Game matrix `Q[a][u] = r(s,a,u) + gamma * E[v(s')]` at state `s`.
pub fn joint_q_matrix(game: &MarkovGame, v: &ValueTable, s: usize) -> PayoffMatrix {
    assert!(s < game.n_states(), "state {s} out of range");
    let mut data = Vec::with_capacity(game.n_pa * game.n_aa);
    for a in 0..game.n_pa {
        for u in 0..game.n_aa {
            data.push(game.backup(s, a, u, &v.values));
        }
    }
    PayoffMatrix::from_flat(game.n_pa, game.n_aa, data).expect("shape matches by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_single_state_game() {
        let g = make_game(1, 1, 1, &[vec![vec![vec![1.0]]]], &[vec![vec![0.0]]], 0.0).unwrap();
        assert_eq!(g.n_states(), 1);
        assert_eq!(g.reward(0, 0, 0), 0.0);
    }

    #[test]
    fn rejects_short_row() {
        let err = make_game(
            2,
            1,
            1,
            &[vec![vec![vec![0.5, 0.4]]], vec![vec![vec![0.0, 1.0]]]],
            &[vec![vec![0.0]], vec![vec![0.0]]],
            0.5,
        )
        .unwrap_err();
        assert!(matches!(err, GameError::InvalidDistribution { .. }));
    }

    #[test]
    fn rejects_bad_discount_and_shapes() {
        let t = [vec![vec![vec![1.0]]]];
        let r = [vec![vec![0.0]]];
        assert_eq!(make_game(1, 1, 1, &t, &r, 1.0).unwrap_err(), GameError::InvalidDiscount(1.0));
        assert!(matches!(
            make_game(1, 2, 1, &t, &r, 0.5).unwrap_err(),
            GameError::DimensionMismatch(_)
        ));
        assert!(matches!(
            make_game(1, 1, 1, &t, &[vec![vec![f64::NAN]]], 0.5).unwrap_err(),
            GameError::NonFiniteReward { .. }
        ));
    }

    #[test]
    fn counterexample_tensors() {
        let g = MarkovGame::two_state_counterexample();
        // Independent row-sum check over every (s, a, u).
        for s in 0..2 {
            for a in 0..2 {
                for u in 0..2 {
                    let sum: f64 = g.transition_row(s, a, u).iter().sum();
                    assert!((sum - 1.0).abs() < 1e-12);
                    if s == 1 {
                        assert_eq!(g.transition_row(s, a, u), &[0.0, 1.0]);
                        assert_eq!(g.reward(s, a, u), 0.0);
                    }
                }
            }
        }
        assert_eq!(g.reward(0, 0, 0), -3.0);
        assert_eq!(g.reward(0, 1, 0), -2.0);
        assert_eq!(g.reward(0, 1, 1), -1.0);
        assert_eq!(g.reward(0, 0, 1), -6.0);
        assert!((g.transition_row(0, 0, 1)[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(g.gamma(), 0.75);
    }

    #[test]
    fn printed_game_matrices() {
        let g = MarkovGame::two_state_counterexample();
        let cases = [
            (-7.0, [[-8.25, -7.75], [-7.25, -6.25]]),
            (-12.0, [[-12.0, -9.0], [-11.0, -10.0]]),
            (-4.0, [[-6.0, -7.0], [-5.0, -4.0]]),
            (-8.0, [[-9.0, -8.0], [-8.0, -7.0]]),
        ];
        for (v1, want) in cases {
            let q = joint_q_matrix(&g, &ValueTable::from_values(vec![v1, 0.0]), 0);
            for a in 0..2 {
                for u in 0..2 {
                    assert!((q.get(a, u) - want[a][u]).abs() < 1e-9, "v={v1} a={a} u={u}");
                }
            }
        }
    }

    #[test]
    fn zero_value_collapses_to_reward() {
        let g = MarkovGame::two_state_counterexample();
        let q = joint_q_matrix(&g, &ValueTable::zeros(2), 0);
        for a in 0..2 {
            for u in 0..2 {
                assert_eq!(q.get(a, u), g.reward(0, a, u));
            }
        }
    }

    #[test]
    fn json_round_trip_validates() {
        let g = MarkovGame::two_state_counterexample();
        let back = MarkovGame::from_json(&g.to_json()).unwrap();
        assert_eq!(g, back);
        let bad = g.to_json().replace("0.75", "1.5");
        assert!(matches!(MarkovGame::from_json(&bad), Err(GameError::InvalidDiscount(_))));
    }

    #[test]
    fn policy_constructors() {
        let p = TabularPolicy::deterministic(3, &[2, 0]).unwrap();
        assert_eq!(p.row(0), &[0.0, 0.0, 1.0]);
        assert!(TabularPolicy::deterministic(2, &[2]).is_err());
        assert!(TabularPolicy::new(vec![vec![0.6, 0.6]]).is_err());
        let u = TabularPolicy::uniform(2, 4);
        assert_eq!(u.row_max(), vec![0.25, 0.25]);
    }
}
