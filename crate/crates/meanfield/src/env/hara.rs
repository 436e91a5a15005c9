//! Mean-field capital accumulation with HARA utility of consumption.
//!
//! Wealth evolves as `X_{t+1} = G(z_t, W_t)·α_t`, where `α_t ∈ [0, X_t]` is
//! the amount invested (borrowing is not allowed, the rest is consumed),
//! `z_t = ∫a dθ_t(a)` is the population's mean investment and `W` a positive
//! production shock. The agent maximizes discounted HARA utility
//! `Σ ρ^t (X_t − α_t)^γ / γ`; since the learner minimizes cost, utilities
//! enter negated, and the discount factor is baked into the per-step cost so
//! a single undiscounted backup rule covers the problem.
//!
//! The production function is multiplicative, `G(z, w) = g(z)·w`, with
//! `g(z) = C / (ρ·E[W^γ]·(1 + (C − 1)·z³))`, strictly decreasing in `z`:
//! aggregate investment erodes individual production efficiency.

use rand::{Rng, RngCore};

use crate::deterministic::{SliceContext, TabularModel};
use crate::distribution::{MeanFieldSlice, StateActionDistribution};
use crate::env::{InitialLaw, MeanFieldEnvironment, Transition};
use crate::error::{Error, Result};
use crate::grid::{DiscreteSpace, TimeGrid};

/// Parameters of the accumulation problem.
#[derive(Debug, Clone, PartialEq)]
pub struct HaraParams {
    /// Atoms `(value, probability)` of the production shock `W`.
    pub noise: Vec<(f64, f64)>,
    /// Productivity constant `C > 1`.
    pub productivity: f64,
    /// Discount factor `ρ ∈ (0, 1]`.
    pub discount: f64,
    /// Utility exponent `γ ∈ (0, 1)`.
    pub utility_exponent: f64,
}

impl Default for HaraParams {
    fn default() -> Self {
        Self {
            noise: vec![(0.9, 0.75), (1.3, 0.25)],
            productivity: 3.0,
            discount: 0.95,
            utility_exponent: 0.2,
        }
    }
}

impl HaraParams {
    pub fn validate(&self) -> Result<()> {
        if self.noise.is_empty()
            || self.noise.iter().any(|(w, p)| *w <= 0.0 || *p < 0.0)
            || (self.noise.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidConfig(
                "noise atoms must be positive with probabilities summing to 1".into(),
            ));
        }
        if self.productivity <= 0.0 {
            return Err(Error::InvalidConfig("productivity must be positive".into()));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::InvalidConfig("discount must lie in (0, 1]".into()));
        }
        if !(self.utility_exponent > 0.0 && self.utility_exponent < 1.0) {
            return Err(Error::InvalidConfig("utility exponent must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// `E[W^p]` over the noise atoms.
    pub fn noise_moment(&self, p: f64) -> f64 {
        self.noise.iter().map(|(w, prob)| prob * w.powf(p)).sum()
    }

    /// `g(z) = C / (ρ·E[W^γ]·(1 + (C − 1)·z³))`, the deterministic part of
    /// the production function; strictly decreasing in `z ≥ 0`.
    pub fn production_factor(&self, z: f64) -> f64 {
        let c = self.productivity;
        let scale = self.discount * self.noise_moment(self.utility_exponent);
        c / (scale * (1.0 + (c - 1.0) * z.powi(3)))
    }

    /// HARA utility of consumption, `c^γ/γ`.
    pub fn utility(&self, consumption: f64) -> f64 {
        debug_assert!(consumption >= 0.0);
        consumption.powf(self.utility_exponent) / self.utility_exponent
    }

    /// Cost observed by the minimizing learner at time index `n`:
    /// the negated discounted utility `−ρ^n·u(c)`.
    pub fn step_cost(&self, n: usize, consumption: f64) -> f64 {
        -self.discount.powi(n as i32) * self.utility(consumption)
    }
}

/// The accumulation problem on truncated wealth/investment grids.
#[derive(Debug, Clone)]
pub struct HaraEnvironment {
    params: HaraParams,
    time: TimeGrid,
    states: DiscreteSpace,
    actions: DiscreteSpace,
    initial: InitialLaw,
    /// `admissible_len[x]` = number of actions with value ≤ state value.
    admissible_len: Vec<usize>,
}

impl HaraEnvironment {
    pub fn new(
        params: HaraParams,
        time: TimeGrid,
        states: DiscreteSpace,
        actions: DiscreteSpace,
        initial: InitialLaw,
    ) -> Result<Self> {
        params.validate()?;
        if states.lower() != 0.0 || actions.lower() != 0.0 {
            return Err(Error::InvalidConfig(
                "wealth and investment grids must start at 0 (borrowing is not allowed)".into(),
            ));
        }
        let admissible_len = (0..states.len())
            .map(|x| {
                let wealth = states.value(x);
                (0..actions.len()).take_while(|&a| actions.value(a) <= wealth + 1e-12).count()
            })
            .collect();
        Ok(Self { params, time, states, actions, initial, admissible_len })
    }

    /// The full-scale configuration: wealth and investment grids `[0, 4]`
    /// with step 0.05, two periods, initial wealth uniform on `[0, 1]`.
    pub fn standard() -> Self {
        Self::new(
            HaraParams::default(),
            TimeGrid::new(2.0, 2).expect("valid grid"),
            DiscreteSpace::new(0.0, 4.0, 0.05).expect("valid grid"),
            DiscreteSpace::new(0.0, 4.0, 0.05).expect("valid grid"),
            InitialLaw::Uniform { lower: 0.0, upper: 1.0 },
        )
        .expect("standard configuration is valid")
    }

    pub fn params(&self) -> &HaraParams {
        &self.params
    }

    pub fn initial_law(&self) -> &InitialLaw {
        &self.initial
    }

    fn mean_investment(&self, population: &MeanFieldSlice<'_>) -> Result<f64> {
        population.mean_action(&self.actions)
    }
}

impl MeanFieldEnvironment for HaraEnvironment {
    fn time_grid(&self) -> &TimeGrid {
        &self.time
    }

    fn states(&self) -> &DiscreteSpace {
        &self.states
    }

    fn actions(&self) -> &DiscreteSpace {
        &self.actions
    }

    fn admissible(&self, n: usize, state: usize) -> std::ops::Range<usize> {
        if n == self.time.n_steps() {
            // Nothing is produced after the horizon: investing is forced off
            // and everything is consumed.
            0..1
        } else {
            0..self.admissible_len[state]
        }
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> usize {
        self.initial.sample(&self.states, rng)
    }

    fn step(
        &self,
        n: usize,
        state: usize,
        action: usize,
        population: &MeanFieldSlice<'_>,
        rng: &mut dyn RngCore,
    ) -> Result<Transition> {
        let wealth = self.states.value(state);
        let invested = self.actions.value(action);
        assert!(
            invested <= wealth + 1e-12,
            "inadmissible investment {invested} at wealth {wealth}"
        );
        let z = self.mean_investment(population)?;
        let shock = {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = self.params.noise[self.params.noise.len() - 1].0;
            for (w, p) in &self.params.noise {
                acc += p;
                if u < acc {
                    chosen = *w;
                    break;
                }
            }
            chosen
        };
        let produced = self.params.production_factor(z) * shock * invested;
        Ok(Transition {
            next_state: self.states.project_index(produced),
            cost: self.params.step_cost(n, wealth - invested),
        })
    }

    fn terminal_cost(&self, state: usize, _population: &MeanFieldSlice<'_>) -> Result<f64> {
        let wealth = self.states.value(state);
        Ok(self.params.step_cost(self.time.n_steps(), wealth))
    }
}

impl TabularModel for HaraEnvironment {
    fn n_states(&self) -> usize {
        self.states.len()
    }

    fn n_actions(&self) -> usize {
        self.actions.len()
    }

    fn n_steps(&self) -> usize {
        self.time.n_steps()
    }

    fn initial_distribution(&self) -> Vec<f64> {
        self.initial.projected_weights(&self.states)
    }

    fn admissible(&self, n: usize, state: usize) -> std::ops::Range<usize> {
        MeanFieldEnvironment::admissible(self, n, state)
    }

    fn prepare(&self, _n: usize, nu: &StateActionDistribution) -> SliceContext {
        SliceContext { mean_action: nu.mean_action(&self.actions) }
    }

    fn transition_into(
        &self,
        _n: usize,
        _state: usize,
        action: usize,
        ctx: &SliceContext,
        out: &mut [f64],
    ) {
        out.fill(0.0);
        let factor = self.params.production_factor(ctx.mean_action);
        let invested = self.actions.value(action);
        for (w, p) in &self.params.noise {
            out[self.states.project_index(factor * w * invested)] += p;
        }
    }

    fn running_cost(&self, n: usize, state: usize, action: usize, _ctx: &SliceContext) -> f64 {
        self.params.step_cost(n, self.states.value(state) - self.actions.value(action))
    }

    fn terminal_cost(&self, state: usize, _state_marginal: &[f64]) -> f64 {
        self.params.step_cost(self.time.n_steps(), self.states.value(state))
    }
}
