//! The mean-field environment contract and the two concrete problems.
//!
//! An environment is a black box: given the current time index, state,
//! action and the population's state-action distribution, it returns the
//! realized cost and the next state. The learner never sees transition
//! probabilities or cost functions, only samples.

use rand::RngCore;

use crate::distribution::MeanFieldSlice;
use crate::error::{Error, Result};
use crate::grid::{DiscreteSpace, TimeGrid};

mod hara;
mod trader;

pub use hara::{HaraEnvironment, HaraParams};
pub use trader::{TraderEnvironment, TraderParams};

/// Standard normal CDF via the complementary error function.
pub(crate) fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// One environment step: the state the process moved to and the cost charged
/// for the step that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub next_state: usize,
    pub cost: f64,
}

/// The initial-state law, sampled at the start of every episode and also
/// available exactly (projected onto the state grid) for model-based solvers.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    Uniform { lower: f64, upper: f64 },
    Gaussian { mean: f64, sd: f64 },
    /// Explicit weights over the state grid.
    Categorical(Vec<f64>),
}

impl InitialLaw {
    pub fn sample(&self, states: &DiscreteSpace, rng: &mut dyn RngCore) -> usize {
        use rand::Rng;
        match self {
            InitialLaw::Uniform { lower, upper } => {
                states.project_index(rng.random_range(*lower..*upper))
            }
            InitialLaw::Gaussian { mean, sd } => {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                states.project_index(mean + sd * z)
            }
            InitialLaw::Categorical(weights) => {
                let u: f64 = rng.random::<f64>();
                let mut acc = 0.0;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        return i;
                    }
                }
                weights.len() - 1
            }
        }
    }

    /// The exact law of `project(draw)` as weights over the state grid.
    pub fn projected_weights(&self, states: &DiscreteSpace) -> Vec<f64> {
        let n = states.len();
        match self {
            InitialLaw::Categorical(weights) => {
                assert_eq!(weights.len(), n, "categorical initial law must match state grid");
                weights.clone()
            }
            _ => {
                let mut weights = vec![0.0; n];
                for (i, w) in weights.iter_mut().enumerate() {
                    // Projection cell around grid point i: bounded by the
                    // midpoints toward the neighbors, open-ended at the rim.
                    let lo = if i == 0 {
                        f64::NEG_INFINITY
                    } else {
                        0.5 * (states.value(i - 1) + states.value(i))
                    };
                    let hi = if i + 1 == n {
                        f64::INFINITY
                    } else {
                        0.5 * (states.value(i) + states.value(i + 1))
                    };
                    *w = match self {
                        InitialLaw::Uniform { lower, upper } => {
                            let span = upper - lower;
                            ((hi.min(*upper) - lo.max(*lower)) / span).max(0.0)
                        }
                        InitialLaw::Gaussian { mean, sd } => {
                            normal_cdf((hi - mean) / sd) - normal_cdf((lo - mean) / sd)
                        }
                        InitialLaw::Categorical(_) => unreachable!(),
                    };
                }
                weights
            }
        }
    }
}

/// The stochastic transition-and-cost contract that the learner interacts
/// with. Implementations are immutable configuration plus pure functions of
/// `(inputs, noise draw)`; all randomness comes through the caller's
/// generator so runs can be replayed.
pub trait MeanFieldEnvironment {
    fn time_grid(&self) -> &TimeGrid;
    fn states(&self) -> &DiscreteSpace;
    fn actions(&self) -> &DiscreteSpace;

    /// Admissible action indices at `(t_n, x)`, always a non-empty
    /// contiguous range starting at some index.
    fn admissible(&self, n: usize, state: usize) -> std::ops::Range<usize>;

    fn sample_initial(&self, rng: &mut dyn RngCore) -> usize;

    /// Advances one step for `n < N_T`. The returned state is always on the
    /// state grid (projection happens inside).
    fn step(
        &self,
        n: usize,
        state: usize,
        action: usize,
        population: &MeanFieldSlice<'_>,
        rng: &mut dyn RngCore,
    ) -> Result<Transition>;

    /// Cost charged at the final time point `n = N_T`.
    fn terminal_cost(&self, state: usize, population: &MeanFieldSlice<'_>) -> Result<f64>;

    /// Checks that every `(n, x)` has at least one admissible action.
    fn validate_admissibility(&self) -> Result<()> {
        for n in 0..=self.time_grid().n_steps() {
            for x in 0..self.states().len() {
                if self.admissible(n, x).is_empty() {
                    return Err(Error::InvalidConfig(format!(
                        "no admissible action at time index {n}, state index {x}"
                    )));
                }
            }
        }
        Ok(())
    }
}
