//! Tabular reinforcement learning for finite-horizon mean field games and
//! mean field control.
//!
//! A population of indistinguishable agents interacts through its
//! state-action distribution. Two solution concepts coexist on the same
//! data: the *competitive* one (a Nash equilibrium, each agent best-responds
//! to a frozen crowd) and the *cooperative* one (a planner optimizes the
//! crowd as a whole). This crate implements a single two-timescale
//! Q-learning algorithm that learns either solution depending only on the
//! ratio of two learning rates, plus the exact solvers and closed-form
//! benchmarks needed to verify it:
//!
//! - [`grid`], [`distribution`], [`qtensor`], [`rates`]: grids, simplex
//!   flows, Q tables, visit counters and rate schedules.
//! - [`env`]: the environment contract and two concrete problems, a capital
//!   accumulation game with HARA utility and an optimal execution problem
//!   with price impact.
//! - [`deterministic`]: exact backward/forward operators and their damped
//!   two-timescale alternation for model-known solving.
//! - [`qlearning`]: the model-free two-timescale learner.
//! - [`benchmarks`]: closed-form Riccati solutions, the accumulation-game
//!   fixed point, and an exhaustive policy oracle for tiny instances.
//!
//! The guide under `book/` walks through the concepts; its code snippets
//! compile and run as doctests of this crate.

pub mod benchmarks;
pub mod deterministic;
pub mod distribution;
pub mod env;
pub mod error;
pub mod grid;
pub mod qlearning;
pub mod qtensor;
pub mod rates;
pub mod testing;

pub use distribution::{
    mean_action, DistributionFlow, MarginalFlow, MeanField, MeanFieldMode, MeanFieldSlice,
    StateActionDistribution,
};
pub use error::{Error, Result};
pub use grid::{DiscreteSpace, TimeGrid};
pub use qtensor::{QTensor, VisitCounter};
pub use rates::RateSchedule;

// The book's code snippets double as doctests so the guide cannot drift
// from the library.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }

    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(grids_and_distributions, "../../../book/src/grids-and-distributions.md");
    chapter!(environments, "../../../book/src/environments.md");
    chapter!(exact_solvers, "../../../book/src/exact-solvers.md");
    chapter!(two_timescale_learning, "../../../book/src/two-timescale-learning.md");
    chapter!(benchmarks, "../../../book/src/benchmarks.md");
    chapter!(command_line, "../../../book/src/command-line.md");
}
