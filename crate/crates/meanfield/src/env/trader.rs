//! Optimal execution with price impact through the mean trading rate.
//!
//! The inventory of a representative trader follows `dX_t = α_t dt + σ dW_t`.
//! Trading costs `(c_α/2)α²` per unit time, holding inventory costs
//! `(c_X/2)x²`, and the aggregate trading rate of the crowd moves the price,
//! crediting each trader `γ·x·∫a dθ_t(a)`. Unwound inventory is penalized at
//! the horizon by `(c_g/2)x²`. Discretization is an Euler step of size `dt`
//! followed by projection on the inventory grid; the per-step cost is the
//! running cost scaled by `dt`.

use ndarray::Array3;
use rand::{Rng, RngCore};

use crate::deterministic::{SliceContext, TabularModel};
use crate::distribution::{MeanFieldSlice, StateActionDistribution};
use crate::env::{normal_cdf, InitialLaw, MeanFieldEnvironment, Transition};
use crate::error::{Error, Result};
use crate::grid::{DiscreteSpace, TimeGrid};

/// Parameters of the execution problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraderParams {
    /// Trading cost coefficient `c_α > 0`.
    pub trading_cost: f64,
    /// Running inventory penalty `c_X > 0`.
    pub inventory_cost: f64,
    /// Terminal inventory penalty `c_g ≥ 0`.
    pub terminal_cost: f64,
    /// Price impact of the mean trading rate, `γ`.
    pub price_impact: f64,
    /// Inventory volatility `σ ≥ 0`.
    pub volatility: f64,
    /// Horizon `T > 0`.
    pub horizon: f64,
}

impl Default for TraderParams {
    fn default() -> Self {
        Self {
            trading_cost: 1.0,
            inventory_cost: 2.0,
            terminal_cost: 0.3,
            price_impact: 1.75,
            volatility: 0.5,
            horizon: 1.0,
        }
    }
}

impl TraderParams {
    pub fn validate(&self) -> Result<()> {
        if self.trading_cost <= 0.0 || self.inventory_cost <= 0.0 {
            return Err(Error::InvalidConfig(
                "trading and inventory cost coefficients must be positive".into(),
            ));
        }
        if self.terminal_cost < 0.0 || self.volatility < 0.0 {
            return Err(Error::InvalidConfig(
                "terminal cost and volatility must be non-negative".into(),
            ));
        }
        if self.horizon <= 0.0 {
            return Err(Error::InvalidConfig("horizon must be positive".into()));
        }
        Ok(())
    }

    /// Running cost rate `(c_α/2)a² + (c_X/2)x² − γ·x·z` where `z` is the
    /// mean trading rate of the population.
    pub fn running_cost_rate(&self, x: f64, a: f64, z: f64) -> f64 {
        0.5 * self.trading_cost * a * a + 0.5 * self.inventory_cost * x * x
            - self.price_impact * x * z
    }

    pub fn terminal_penalty(&self, x: f64) -> f64 {
        0.5 * self.terminal_cost * x * x
    }
}

/// The execution problem on truncated inventory/trading-rate grids.
#[derive(Debug, Clone)]
pub struct TraderEnvironment {
    params: TraderParams,
    time: TimeGrid,
    states: DiscreteSpace,
    actions: DiscreteSpace,
    initial: InitialLaw,
    /// Exact law of `project(x + a·dt + σ√dt·Z)`, indexed `[x][a][x']`.
    kernel: Array3<f64>,
}

impl TraderEnvironment {
    pub fn new(
        params: TraderParams,
        time: TimeGrid,
        states: DiscreteSpace,
        actions: DiscreteSpace,
        initial: InitialLaw,
    ) -> Result<Self> {
        params.validate()?;
        if (time.horizon() - params.horizon).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "time grid horizon {} does not match parameter horizon {}",
                time.horizon(),
                params.horizon
            )));
        }
        let kernel = Self::build_kernel(&params, &time, &states, &actions);
        Ok(Self { params, time, states, actions, initial, kernel })
    }

    /// Grids used when learning the competitive (game) solution: trading
    /// rates in `[-2.5, 1]`, inventory in `[-1.5, 1.75]`, step `√dt = 1/4`.
    pub fn competitive() -> Self {
        Self::with_grids(-1.5, 1.75, -2.5, 1.0)
    }

    /// Grids used when learning the cooperative (planner) solution: trading
    /// rates in `[-0.25, 5]`, inventory in `[-0.75, 4]`.
    pub fn cooperative() -> Self {
        Self::with_grids(-0.75, 4.0, -0.25, 5.0)
    }

    fn with_grids(x_lo: f64, x_hi: f64, a_lo: f64, a_hi: f64) -> Self {
        let step = 0.25; // √dt for dt = 1/16
        Self::new(
            TraderParams::default(),
            TimeGrid::new(1.0, 16).expect("valid grid"),
            DiscreteSpace::new(x_lo, x_hi, step).expect("valid grid"),
            DiscreteSpace::new(a_lo, a_hi, step).expect("valid grid"),
            InitialLaw::Gaussian { mean: 0.5, sd: 0.3 },
        )
        .expect("standard configuration is valid")
    }

    pub fn params(&self) -> &TraderParams {
        &self.params
    }

    pub fn initial_law(&self) -> &InitialLaw {
        &self.initial
    }

    /// Materializes the exact transition law of the projected Euler step:
    /// cell probabilities are normal CDF differences between the projection
    /// cell boundaries (the rim cells absorb the clamped tails).
    fn build_kernel(
        params: &TraderParams,
        time: &TimeGrid,
        states: &DiscreteSpace,
        actions: &DiscreteSpace,
    ) -> Array3<f64> {
        let (nx, na) = (states.len(), actions.len());
        let dt = time.dt();
        let sd = params.volatility * dt.sqrt();
        let mut kernel = Array3::zeros((nx, na, nx));
        for x in 0..nx {
            for a in 0..na {
                let mean = states.value(x) + actions.value(a) * dt;
                if sd == 0.0 {
                    kernel[(x, a, states.project_index(mean))] = 1.0;
                    continue;
                }
                for nx_to in 0..nx {
                    let lo = if nx_to == 0 {
                        f64::NEG_INFINITY
                    } else {
                        0.5 * (states.value(nx_to - 1) + states.value(nx_to))
                    };
                    let hi = if nx_to + 1 == nx {
                        f64::INFINITY
                    } else {
                        0.5 * (states.value(nx_to) + states.value(nx_to + 1))
                    };
                    kernel[(x, a, nx_to)] =
                        normal_cdf((hi - mean) / sd) - normal_cdf((lo - mean) / sd);
                }
            }
        }
        kernel
    }

    fn mean_trading_rate(&self, population: &MeanFieldSlice<'_>) -> Result<f64> {
        population.mean_action(&self.actions)
    }
}

impl MeanFieldEnvironment for TraderEnvironment {
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
        0..self.actions.len()
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> usize {
        self.initial.sample(&self.states, rng)
    }

    fn step(
        &self,
        _n: usize,
        state: usize,
        action: usize,
        population: &MeanFieldSlice<'_>,
        rng: &mut dyn RngCore,
    ) -> Result<Transition> {
        let x = self.states.value(state);
        let a = self.actions.value(action);
        let z = self.mean_trading_rate(population)?;
        let dt = self.time.dt();
        let drifted = x + a * dt;
        let next = if self.params.volatility > 0.0 {
            let noise: f64 = rng.sample(rand_distr::StandardNormal);
            drifted + self.params.volatility * dt.sqrt() * noise
        } else {
            drifted
        };
        Ok(Transition {
            next_state: self.states.project_index(next),
            cost: dt * self.params.running_cost_rate(x, a, z),
        })
    }

    fn terminal_cost(&self, state: usize, _population: &MeanFieldSlice<'_>) -> Result<f64> {
        Ok(self.params.terminal_penalty(self.states.value(state)))
    }
}

impl TabularModel for TraderEnvironment {
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

    fn admissible(&self, _n: usize, _state: usize) -> std::ops::Range<usize> {
        0..self.actions.len()
    }

    fn prepare(&self, _n: usize, nu: &StateActionDistribution) -> SliceContext {
        SliceContext { mean_action: nu.mean_action(&self.actions) }
    }

    fn transition_into(
        &self,
        _n: usize,
        state: usize,
        action: usize,
        _ctx: &SliceContext,
        out: &mut [f64],
    ) {
        out.copy_from_slice(
            self.kernel
                .index_axis(ndarray::Axis(0), state)
                .index_axis(ndarray::Axis(0), action)
                .as_slice()
                .expect("kernel is contiguous"),
        );
    }

    fn running_cost(&self, _n: usize, state: usize, action: usize, ctx: &SliceContext) -> f64 {
        self.time.dt()
            * self.params.running_cost_rate(
                self.states.value(state),
                self.actions.value(action),
                ctx.mean_action,
            )
    }

    fn terminal_cost(&self, state: usize, _state_marginal: &[f64]) -> f64 {
        self.params.terminal_penalty(self.states.value(state))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::{MeanField, MeanFieldMode};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Action-marginal population concentrated on trading rate zero.
    fn idle_population(env: &TraderEnvironment) -> MeanField {
        let zero_index = env.actions().project_index(0.0);
        assert_eq!(env.actions().value(zero_index), 0.0);
        let mut mf = MeanField::uniform(
            MeanFieldMode::ActionMarginal,
            env.time_grid().n_points(),
            env.states().len(),
            env.actions().len(),
        );
        for n in 0..env.time_grid().n_points() {
            mf.observe(n, 0, zero_index, 1.0);
        }
        mf
    }

    #[test]
    fn kernel_rows_are_distributions() {
        let env = TraderEnvironment::competitive();
        for x in 0..env.states().len() {
            for a in 0..env.actions().len() {
                let row: f64 =
                    (0..env.states().len()).map(|to| env.kernel[(x, a, to)]).sum();
                assert_abs_diff_eq!(row, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn noiseless_drift_free_step() {
        let mut params = TraderParams::default();
        params.volatility = 0.0;
        let env = TraderEnvironment::new(
            params,
            TimeGrid::new(1.0, 16).unwrap(),
            DiscreteSpace::new(-1.5, 1.75, 0.25).unwrap(),
            DiscreteSpace::new(-2.5, 1.0, 0.25).unwrap(),
            InitialLaw::Gaussian { mean: 0.5, sd: 0.3 },
        )
        .unwrap();
        let population = idle_population(&env);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = env.states().project_index(1.0);
        let zero_action = env.actions().project_index(0.0);
        let t = env.step(0, x, zero_action, &population.slice(0), &mut rng).unwrap();
        assert_eq!(t.next_state, x);
        let dt = 1.0 / 16.0;
        assert_abs_diff_eq!(t.cost, dt * 0.5 * 2.0 * 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_inventory_cost_is_pure_trading_cost() {
        let env = TraderEnvironment::competitive();
        // A population with any mean rate: impact term vanishes at x = 0.
        let mut population = MeanField::uniform(
            MeanFieldMode::ActionMarginal,
            env.time_grid().n_points(),
            env.states().len(),
            env.actions().len(),
        );
        population.observe(0, 0, 0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x0 = env.states().project_index(0.0);
        let a = env.actions().project_index(-1.0);
        let t = env.step(0, x0, a, &population.slice(0), &mut rng).unwrap();
        let dt = 1.0 / 16.0;
        assert_abs_diff_eq!(t.cost, dt * 0.5 * 1.0, epsilon = 1e-12);
    }

    #[test]
    fn noiseless_trajectory_matches_euler_by_hand() {
        let mut params = TraderParams::default();
        params.volatility = 0.0;
        let env = TraderEnvironment::new(
            params,
            TimeGrid::new(1.0, 16).unwrap(),
            DiscreteSpace::new(-1.5, 1.75, 0.25).unwrap(),
            DiscreteSpace::new(-2.5, 1.0, 0.25).unwrap(),
            InitialLaw::Gaussian { mean: 0.5, sd: 0.3 },
        )
        .unwrap();
        let population = idle_population(&env);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // Constant rate −2: each Euler step moves x by −1/8, which projection
        // rounds back; starting on a grid point the sequence is exactly
        // x, x−0.25, x−0.25, ... alternating between midpoint rounding down
        // and landing on a grid point every other step.
        let mut x = env.states().project_index(1.0);
        let a = env.actions().project_index(-2.0);
        let mut values = vec![env.states().value(x)];
        for n in 0..4 {
            let t = env.step(n, x, a, &population.slice(n), &mut rng).unwrap();
            x = t.next_state;
            values.push(env.states().value(x));
        }
        // By hand: 1.0 → project(0.875) = 0.75 (midpoint rounds down)
        //          0.75 → project(0.625) = 0.5
        //          0.5 → project(0.375) = 0.25
        //          0.25 → project(0.125) = 0.0
        assert_eq!(values, vec![1.0, 0.75, 0.5, 0.25, 0.0]);
    }

    #[test]
    fn one_step_mean_matches_drift() {
        let env = TraderEnvironment::competitive();
        let population = idle_population(&env);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x0 = env.states().project_index(0.0);
        let a1 = env.actions().project_index(1.0);
        let draws = 100_000;
        let mut total = 0.0;
        for _ in 0..draws {
            let t = env.step(0, x0, a1, &population.slice(0), &mut rng).unwrap();
            total += env.states().value(t.next_state);
        }
        let estimate = total / draws as f64;
        let dt: f64 = 1.0 / 16.0;
        let three_se = 3.0 * env.params().volatility * dt.sqrt() / (draws as f64).sqrt();
        assert_abs_diff_eq!(estimate, 1.0 * dt, epsilon = three_se);
        // The kernel encodes the same projected law exactly.
        let kernel_mean: f64 = (0..env.states().len())
            .map(|to| env.kernel[(x0, a1, to)] * env.states().value(to))
            .sum();
        assert_abs_diff_eq!(estimate, kernel_mean, epsilon = three_se);
    }

    #[test]
    fn initial_samples_live_on_grid_with_right_spread() {
        let env = TraderEnvironment::competitive();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = 100_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..draws {
            let idx = env.sample_initial(&mut rng);
            assert!(idx < env.states().len());
            let v = env.states().value(idx);
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / draws as f64;
        let sd = (sum_sq / draws as f64 - mean * mean).sqrt();
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
        assert!((sd - 0.3).abs() / 0.3 < 0.05, "sd {sd}");
    }
}
