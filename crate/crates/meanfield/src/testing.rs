//! Small hand-set models for tests and examples.
//!
//! [`ToyModel`] is a tabular mean-field model with an explicit kernel and
//! cost tables. It implements both [`TabularModel`] (exact solvers can use
//! it) and [`MeanFieldEnvironment`] (learners can sample it), which makes it
//! the reference instance for learner-versus-oracle checks.

use ndarray::{Array2, Array3};
use rand::{Rng, RngCore};

use crate::deterministic::{SliceContext, TabularModel};
use crate::distribution::{MeanFieldSlice, StateActionDistribution};
use crate::env::{MeanFieldEnvironment, Transition};
use crate::error::Result;
use crate::grid::{DiscreteSpace, TimeGrid};

/// An explicit finite model. Grid values equal their indices, so the mean
/// action of a population is just the index-weighted average.
#[derive(Debug, Clone)]
pub struct ToyModel {
    pub n_steps: usize,
    /// `kernel[(x, a, x')] = p(x'|x, a)`; independent of the population.
    pub kernel: Array3<f64>,
    /// `running[(x, a)]`, plus `coupling·x·E[a]` when `coupling != 0`.
    pub running: Array2<f64>,
    pub terminal: Vec<f64>,
    pub initial: Vec<f64>,
    /// Strength of a bilinear population coupling in the running cost.
    pub coupling: f64,
    time: TimeGrid,
    states: DiscreteSpace,
    actions: DiscreteSpace,
}

impl ToyModel {
    pub fn new(
        n_steps: usize,
        kernel: Array3<f64>,
        running: Array2<f64>,
        terminal: Vec<f64>,
        initial: Vec<f64>,
    ) -> Self {
        let (nx, na) = (running.nrows(), running.ncols());
        assert_eq!(kernel.shape(), [nx, na, nx]);
        assert_eq!(terminal.len(), nx);
        assert_eq!(initial.len(), nx);
        let horizon = n_steps.max(1);
        Self {
            n_steps,
            kernel,
            running,
            terminal,
            initial,
            coupling: 0.0,
            time: TimeGrid::new(horizon as f64, horizon).expect("valid grid"),
            states: DiscreteSpace::new(0.0, (nx - 1).max(1) as f64, 1.0).expect("valid grid"),
            actions: DiscreteSpace::new(0.0, (na - 1).max(1) as f64, 1.0).expect("valid grid"),
        }
    }

    /// Two states, two actions, no population coupling. Action 1 moves the
    /// chain, action 0 keeps it in place; state 1 is cheap to occupy and
    /// free to leave behind at the horizon.
    pub fn uncoupled_two_state(n_steps: usize) -> Self {
        let mut kernel = Array3::zeros((2, 2, 2));
        kernel[(0, 0, 0)] = 0.8;
        kernel[(0, 0, 1)] = 0.2;
        kernel[(0, 1, 0)] = 0.3;
        kernel[(0, 1, 1)] = 0.7;
        kernel[(1, 0, 0)] = 0.2;
        kernel[(1, 0, 1)] = 0.8;
        kernel[(1, 1, 0)] = 0.7;
        kernel[(1, 1, 1)] = 0.3;
        let running = ndarray::array![[1.0, 0.5], [0.0, 0.8]];
        Self::new(n_steps, kernel, running, vec![1.0, 0.0], vec![0.5, 0.5])
    }

    /// Same chain with a bilinear population coupling of the given strength
    /// added to the running cost.
    pub fn coupled_two_state(n_steps: usize, coupling: f64) -> Self {
        let mut model = Self::uncoupled_two_state(n_steps);
        model.coupling = coupling;
        model
    }
}

impl TabularModel for ToyModel {
    fn n_states(&self) -> usize {
        self.running.nrows()
    }

    fn n_actions(&self) -> usize {
        self.running.ncols()
    }

    fn n_steps(&self) -> usize {
        self.n_steps
    }

    fn initial_distribution(&self) -> Vec<f64> {
        self.initial.clone()
    }

    fn admissible(&self, _n: usize, _state: usize) -> std::ops::Range<usize> {
        0..self.n_actions()
    }

    fn prepare(&self, _n: usize, nu: &StateActionDistribution) -> SliceContext {
        // Grid values equal indices, so the mean action is the index-weighted
        // average (this also works for degenerate single-action models).
        let mean_action = nu
            .action_marginal()
            .iter()
            .enumerate()
            .map(|(a, w)| w * a as f64)
            .sum();
        SliceContext { mean_action }
    }

    fn transition_into(
        &self,
        _n: usize,
        state: usize,
        action: usize,
        _ctx: &SliceContext,
        out: &mut [f64],
    ) {
        for (to, slot) in out.iter_mut().enumerate() {
            *slot = self.kernel[(state, action, to)];
        }
    }

    fn running_cost(&self, _n: usize, state: usize, action: usize, ctx: &SliceContext) -> f64 {
        self.running[(state, action)] + self.coupling * state as f64 * ctx.mean_action
    }

    fn terminal_cost(&self, state: usize, _state_marginal: &[f64]) -> f64 {
        self.terminal[state]
    }
}

impl MeanFieldEnvironment for ToyModel {
    fn time_grid(&self) -> &TimeGrid {
        &self.time
    }

    fn states(&self) -> &DiscreteSpace {
        &self.states
    }

    fn actions(&self) -> &DiscreteSpace {
        &self.actions
    }

    fn admissible(&self, _n: usize, _state: usize) -> std::ops::Range<usize> {
        0..self.n_actions()
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, w) in self.initial.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        self.initial.len() - 1
    }

    fn step(
        &self,
        _n: usize,
        state: usize,
        action: usize,
        population: &MeanFieldSlice<'_>,
        rng: &mut dyn RngCore,
    ) -> Result<Transition> {
        let cost = if self.coupling != 0.0 {
            self.running[(state, action)]
                + self.coupling * state as f64 * population.mean_action(&self.actions)?
        } else {
            self.running[(state, action)]
        };
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut next_state = self.n_states() - 1;
        for to in 0..self.n_states() {
            acc += self.kernel[(state, action, to)];
            if u < acc {
                next_state = to;
                break;
            }
        }
        Ok(Transition { next_state, cost })
    }

    fn terminal_cost(&self, state: usize, _population: &MeanFieldSlice<'_>) -> Result<f64> {
        Ok(self.terminal[state])
    }
}
