//! Population distributions over states and actions.
//!
//! The population at each time step is described by a joint state-action
//! distribution `ν` on the simplex over `𝒳 × 𝒜`; its first marginal `μ`
//! (states) and second marginal `θ` (actions) are what the example problems
//! actually consume. A learner may track the full joint distribution or a
//! single marginal; [`MeanField`] unifies the three modes.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::grid::DiscreteSpace;

/// Tolerance for simplex membership checks.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

fn renormalize(weights: &mut [f64]) {
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        for w in weights {
            *w /= total;
        }
    }
}

fn check_simplex(weights: &[f64], what: &str) -> Result<()> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidDistribution(format!(
            "{what} has a negative or non-finite entry"
        )));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(Error::InvalidDistribution(format!(
            "{what} sums to {total}, expected 1"
        )));
    }
    Ok(())
}

/// A joint distribution over `(state, action)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct StateActionDistribution {
    weights: Array2<f64>,
}

impl StateActionDistribution {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let w = 1.0 / (n_states * n_actions) as f64;
        Self { weights: Array2::from_elem((n_states, n_actions), w) }
    }

    pub fn point_mass(n_states: usize, n_actions: usize, state: usize, action: usize) -> Self {
        let mut weights = Array2::zeros((n_states, n_actions));
        weights[(state, action)] = 1.0;
        Self { weights }
    }

    /// Validates non-negativity and total mass 1 (within [`SIMPLEX_TOLERANCE`]),
    /// then renormalizes exactly.
    pub fn from_weights(weights: Array2<f64>) -> Result<Self> {
        check_simplex(weights.as_slice().expect("standard layout"), "state-action distribution")?;
        let mut dist = Self { weights };
        renormalize(dist.weights.as_slice_mut().expect("standard layout"));
        Ok(dist)
    }

    pub fn n_states(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.weights[(state, action)]
    }

    /// First marginal `μ[x] = Σ_a ν[x, a]`.
    pub fn state_marginal(&self) -> Array1<f64> {
        self.weights.sum_axis(ndarray::Axis(1))
    }

    /// Second marginal `θ[a] = Σ_x ν[x, a]`.
    pub fn action_marginal(&self) -> Array1<f64> {
        self.weights.sum_axis(ndarray::Axis(0))
    }

    /// `Σ_a θ[a]·value(a)` under this distribution's action marginal.
    pub fn mean_action(&self, actions: &DiscreteSpace) -> f64 {
        mean_action(self.action_marginal().view(), actions)
    }

    /// Moves the distribution toward the one-hot indicator of an observed
    /// pair: `ν ← ν + ρ(δ(x,a) − ν)`. Returns the L1 norm of the change.
    /// The result is renormalized to keep the total mass at exactly 1.
    pub fn update_toward(&mut self, state: usize, action: usize, rate: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&rate));
        let mut change = 0.0;
        for ((x, a), w) in self.weights.indexed_iter_mut() {
            let target = if (x, a) == (state, action) { 1.0 } else { 0.0 };
            let delta = rate * (target - *w);
            change += delta.abs();
            *w += delta;
        }
        renormalize(self.weights.as_slice_mut().expect("standard layout"));
        change
    }

    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.weights
            .iter()
            .zip(other.weights.iter())
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

/// Mean of a grid-valued distribution: `Σ_i weights[i]·value(i)`.
pub fn mean_action(weights: ArrayView1<'_, f64>, actions: &DiscreteSpace) -> f64 {
    debug_assert_eq!(weights.len(), actions.len());
    weights
        .iter()
        .enumerate()
        .map(|(i, w)| w * actions.value(i))
        .sum()
}

/// One `StateActionDistribution` per time point `n = 0..=N_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionFlow {
    slices: Vec<StateActionDistribution>,
}

impl DistributionFlow {
    pub fn uniform(n_points: usize, n_states: usize, n_actions: usize) -> Self {
        Self {
            slices: (0..n_points)
                .map(|_| StateActionDistribution::uniform(n_states, n_actions))
                .collect(),
        }
    }

    pub fn from_slices(slices: Vec<StateActionDistribution>) -> Result<Self> {
        if slices.is_empty() {
            return Err(Error::InvalidDistribution("flow needs at least one slice".into()));
        }
        let (nx, na) = (slices[0].n_states(), slices[0].n_actions());
        if slices.iter().any(|s| s.n_states() != nx || s.n_actions() != na) {
            return Err(Error::InvalidDistribution("flow slices have mismatched shapes".into()));
        }
        Ok(Self { slices })
    }

    pub fn n_points(&self) -> usize {
        self.slices.len()
    }

    pub fn slice(&self, n: usize) -> &StateActionDistribution {
        &self.slices[n]
    }

    pub fn slice_mut(&mut self, n: usize) -> &mut StateActionDistribution {
        &mut self.slices[n]
    }

    pub fn iter(&self) -> impl Iterator<Item = &StateActionDistribution> {
        self.slices.iter()
    }

    /// Max over time slices of the per-slice L1 distance.
    pub fn max_slice_l1_distance(&self, other: &Self) -> f64 {
        self.slices
            .iter()
            .zip(other.slices.iter())
            .map(|(a, b)| a.l1_distance(b))
            .fold(0.0, f64::max)
    }
}

/// A flow of one-dimensional marginal distributions (over states or actions).
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalFlow {
    slices: Vec<Array1<f64>>,
}

impl MarginalFlow {
    pub fn uniform(n_points: usize, dim: usize) -> Self {
        Self { slices: (0..n_points).map(|_| Array1::from_elem(dim, 1.0 / dim as f64)).collect() }
    }

    pub fn n_points(&self) -> usize {
        self.slices.len()
    }

    pub fn slice(&self, n: usize) -> ArrayView1<'_, f64> {
        self.slices[n].view()
    }

    /// `m ← m + ρ(δ(i) − m)`, renormalized; returns the L1 change.
    pub fn update_toward(&mut self, n: usize, index: usize, rate: f64) -> f64 {
        let slice = &mut self.slices[n];
        let mut change = 0.0;
        for (i, w) in slice.iter_mut().enumerate() {
            let target = if i == index { 1.0 } else { 0.0 };
            let delta = rate * (target - *w);
            change += delta.abs();
            *w += delta;
        }
        renormalize(slice.as_slice_mut().expect("standard layout"));
        change
    }
}

/// Which population statistic a learner tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanFieldMode {
    /// Joint state-action distribution `ν`.
    Joint,
    /// State marginal `μ` only.
    StateMarginal,
    /// Action marginal `θ` only.
    ActionMarginal,
}

/// A learner's running estimate of the population behavior, in one of the
/// three tracking modes.
#[derive(Debug, Clone, PartialEq)]
pub enum MeanField {
    Joint(DistributionFlow),
    StateMarginal(MarginalFlow),
    ActionMarginal(MarginalFlow),
}

impl MeanField {
    /// The uniform initialization used at the start of learning.
    pub fn uniform(mode: MeanFieldMode, n_points: usize, n_states: usize, n_actions: usize) -> Self {
        match mode {
            MeanFieldMode::Joint => {
                MeanField::Joint(DistributionFlow::uniform(n_points, n_states, n_actions))
            }
            MeanFieldMode::StateMarginal => {
                MeanField::StateMarginal(MarginalFlow::uniform(n_points, n_states))
            }
            MeanFieldMode::ActionMarginal => {
                MeanField::ActionMarginal(MarginalFlow::uniform(n_points, n_actions))
            }
        }
    }

    pub fn mode(&self) -> MeanFieldMode {
        match self {
            MeanField::Joint(_) => MeanFieldMode::Joint,
            MeanField::StateMarginal(_) => MeanFieldMode::StateMarginal,
            MeanField::ActionMarginal(_) => MeanFieldMode::ActionMarginal,
        }
    }

    pub fn n_points(&self) -> usize {
        match self {
            MeanField::Joint(flow) => flow.n_points(),
            MeanField::StateMarginal(flow) | MeanField::ActionMarginal(flow) => flow.n_points(),
        }
    }

    /// Records one observed `(state, action)` pair at time `n` with rate
    /// `ρ ∈ (0, 1]`; returns the L1 norm of the slice change.
    pub fn observe(&mut self, n: usize, state: usize, action: usize, rate: f64) -> f64 {
        match self {
            MeanField::Joint(flow) => flow.slice_mut(n).update_toward(state, action, rate),
            MeanField::StateMarginal(flow) => flow.update_toward(n, state, rate),
            MeanField::ActionMarginal(flow) => flow.update_toward(n, action, rate),
        }
    }

    pub fn slice(&self, n: usize) -> MeanFieldSlice<'_> {
        match self {
            MeanField::Joint(flow) => MeanFieldSlice::Joint(flow.slice(n)),
            MeanField::StateMarginal(flow) => MeanFieldSlice::StateMarginal(flow.slice(n)),
            MeanField::ActionMarginal(flow) => MeanFieldSlice::ActionMarginal(flow.slice(n)),
        }
    }
}

/// A single time slice of the population estimate, as seen by an environment.
#[derive(Debug, Clone, Copy)]
pub enum MeanFieldSlice<'a> {
    Joint(&'a StateActionDistribution),
    StateMarginal(ArrayView1<'a, f64>),
    ActionMarginal(ArrayView1<'a, f64>),
}

impl MeanFieldSlice<'_> {
    /// Mean of the action marginal; unavailable in state-marginal mode.
    pub fn mean_action(&self, actions: &DiscreteSpace) -> Result<f64> {
        match self {
            MeanFieldSlice::Joint(nu) => Ok(nu.mean_action(actions)),
            MeanFieldSlice::ActionMarginal(theta) => Ok(mean_action(*theta, actions)),
            MeanFieldSlice::StateMarginal(_) => Err(Error::MissingMarginal("action marginal")),
        }
    }

    /// State marginal; unavailable in action-marginal mode.
    pub fn state_marginal(&self) -> Result<Array1<f64>> {
        match self {
            MeanFieldSlice::Joint(nu) => Ok(nu.state_marginal()),
            MeanFieldSlice::StateMarginal(mu) => Ok(mu.to_owned()),
            MeanFieldSlice::ActionMarginal(_) => Err(Error::MissingMarginal("state marginal")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn uniform_marginals_are_uniform() {
        let nu = StateActionDistribution::uniform(2, 2);
        assert_eq!(nu.state_marginal(), array![0.5, 0.5]);
        assert_eq!(nu.action_marginal(), array![0.5, 0.5]);
    }

    #[test]
    fn point_mass_marginals() {
        let nu = StateActionDistribution::point_mass(3, 2, 1, 0);
        assert_eq!(nu.state_marginal(), array![0.0, 1.0, 0.0]);
        assert_eq!(nu.action_marginal(), array![1.0, 0.0]);
    }

    // Row sums (0.1 + 0.2, 0.3 + 0.4) and column sums (0.1 + 0.3, 0.2 + 0.4).
    #[test]
    fn marginals_by_hand() {
        let nu =
            StateActionDistribution::from_weights(array![[0.1, 0.2], [0.3, 0.4]]).unwrap();
        let mu = nu.state_marginal();
        let theta = nu.action_marginal();
        assert_abs_diff_eq!(mu[0], 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(mu[1], 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(theta[0], 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(theta[1], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(mu.sum(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(theta.sum(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn from_weights_rejects_bad_input() {
        assert!(StateActionDistribution::from_weights(array![[0.5, 0.6]]).is_err());
        assert!(StateActionDistribution::from_weights(array![[1.2, -0.2]]).is_err());
        assert!(StateActionDistribution::from_weights(array![[f64::NAN, 1.0]]).is_err());
    }

    #[test]
    fn mean_action_point_mass_and_uniform() {
        let actions = DiscreteSpace::new(0.0, 2.0, 1.0).unwrap();
        let point = array![0.0, 0.0, 1.0];
        assert_abs_diff_eq!(mean_action(point.view(), &actions), 2.0);
        let two = DiscreteSpace::new(0.0, 1.0, 1.0).unwrap();
        let uniform = array![0.5, 0.5];
        assert_abs_diff_eq!(mean_action(uniform.view(), &two), 0.5);
    }

    // Dot product by hand: 0.25·(−1) + 0.75·3 = 2.
    #[test]
    fn mean_action_by_hand() {
        let actions = DiscreteSpace::new(-1.0, 3.0, 4.0).unwrap();
        let theta = array![0.25, 0.75];
        assert_abs_diff_eq!(mean_action(theta.view(), &actions), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn full_rate_update_is_one_hot() {
        let mut nu = StateActionDistribution::uniform(2, 2);
        nu.update_toward(1, 0, 1.0);
        assert_eq!(nu.get(1, 0), 1.0);
        assert_eq!(nu.get(0, 0), 0.0);
    }

    // Convex combination by hand: 0.5·uniform + 0.5·δ(0,0).
    #[test]
    fn half_rate_update_by_hand() {
        let mut nu = StateActionDistribution::uniform(2, 2);
        nu.update_toward(0, 0, 0.5);
        assert_abs_diff_eq!(nu.get(0, 0), 0.625, epsilon = 1e-12);
        assert_abs_diff_eq!(nu.get(0, 1), 0.125, epsilon = 1e-12);
        assert_abs_diff_eq!(nu.get(1, 0), 0.125, epsilon = 1e-12);
        assert_abs_diff_eq!(nu.get(1, 1), 0.125, epsilon = 1e-12);
        let total: f64 = nu.weights().iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn marginal_update_mirrors_joint_update() {
        let mut joint = MeanField::uniform(MeanFieldMode::Joint, 1, 3, 4);
        let mut theta = MeanField::uniform(MeanFieldMode::ActionMarginal, 1, 3, 4);
        for (x, a, rate) in [(0, 1, 1.0), (2, 3, 0.5), (1, 1, 0.25)] {
            joint.observe(0, x, a, rate);
            theta.observe(0, x, a, rate);
        }
        let from_joint = match &joint {
            MeanField::Joint(flow) => flow.slice(0).action_marginal(),
            _ => unreachable!(),
        };
        let direct = match &theta {
            MeanField::ActionMarginal(flow) => flow.slice(0).to_owned(),
            _ => unreachable!(),
        };
        for (a, b) in from_joint.iter().zip(direct.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn state_marginal_mode_lacks_action_statistics() {
        let mf = MeanField::uniform(MeanFieldMode::StateMarginal, 2, 3, 4);
        let actions = DiscreteSpace::new(0.0, 3.0, 1.0).unwrap();
        assert!(mf.slice(0).mean_action(&actions).is_err());
        assert!(mf.slice(0).state_marginal().is_ok());
    }
}
