//! A finite Markov game exposed as a one-step sampling model, so the sampled
//! target estimator can be compared with exact enumeration over actions.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::agent::{monte_carlo_target, TargetRule};
use crate::bellman::{wlse, BellmanError};
use crate::game::{MarkovGame, ValueTable};

/// Draws `(a, u)` from the given action distributions and returns the
/// expected backup `r(s, a, u) + gamma * E[V(s')]` under fixed values `V`.
#[derive(Debug, Clone)]
pub struct TabularModel<'g> {
    game: &'g MarkovGame,
    values: ValueTable,
}

impl<'g> TabularModel<'g> {
    pub fn new(game: &'g MarkovGame, values: ValueTable) -> Self {
        Self { game, values }
    }

    pub fn backup(&self, s: usize, a: usize, u: usize) -> f64 {
        self.game.backup(s, a, u, &self.values.values)
    }

    /// `(1/rho) log sum_u mu(u) exp(rho * sum_a pi(a) backup(s, a, u))`.
    pub fn exact_target(&self, s: usize, pi: &[f64], mu: &[f64], rho: f64) -> Result<f64, BellmanError> {
        let per_u: Vec<f64> = (0..self.game.n_adversary_actions())
            .map(|u| pi.iter().enumerate().map(|(a, p)| p * self.backup(s, a, u)).sum())
            .collect();
        wlse(&per_u, mu, rho)
    }

    /// `k` sampled backups with `a ~ pi`, `u ~ mu`, aggregated by `rule`.
    ///
    /// The protagonist expectation sits inside the exponent of the exact
    /// target, so the sample only converges to it when `pi` is deterministic.
    pub fn sampled_target<R: Rng + ?Sized>(
        &self,
        s: usize,
        pi: &[f64],
        mu: &[f64],
        k: usize,
        rule: TargetRule,
        rng: &mut R,
    ) -> Result<f64, BellmanError> {
        let bad = |_| BellmanError::WeightMismatch("weights must be non-negative with a positive sum".into());
        let pa = WeightedIndex::new(pi).map_err(bad)?;
        let pu = WeightedIndex::new(mu).map_err(bad)?;
        Ok(monte_carlo_target(k, rule, || {
            let a = pa.sample(rng);
            let u = pu.sample(rng);
            self.backup(s, a, u)
        }))
    }
}
