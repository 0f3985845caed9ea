//! Policy iteration for zero-sum Markov games with a smoothed (weighted
//! LogSumExp) Bellman operator, and a model-based adversarial actor-critic
//! built on the same operator for continuous control.
//!
//! The tabular side lives in [`game`], [`bellman`], [`matrix_game`] and
//! [`solvers`]. The function-approximation side is [`autodiff`],
//! [`pathtrack`] and [`saac`].

pub mod autodiff;
pub mod bellman;
pub mod game;
pub mod gradcheck;
pub mod matrix_game;
pub mod pathtrack;
pub mod report;
pub mod saac;
pub mod simplex;
pub mod solvers;
pub mod two_state;

pub use bellman::{WeightMode, WlseConfig};
pub use game::{MarkovGame, TabularPolicy, ValueTable};
pub use matrix_game::{solve_matrix_game, MatrixGameSolution, PayoffMatrix};
