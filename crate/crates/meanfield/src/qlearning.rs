//! Two-timescale tabular Q-learning for finite-horizon mean field problems.
//!
//! Each episode walks the environment once from `t_0` to `t_{N_T}` and, at
//! every step, in this order: choose an ε-greedy action from the current Q
//! slice, move the population estimate toward the observed state-action
//! pair, observe the realized cost and next state, and update the visited Q
//! entry toward its one-step target. The distribution update uses the
//! episode-indexed rate `ρ^ν_k` while the Q update uses the visit-indexed
//! rate `ρ^Q`, and the *ratio* of the two schedules decides what is learned:
//! a fast Q relative to the distribution converges to the competitive
//! (Nash) solution, a fast distribution to the cooperative one. Nothing
//! else about the algorithm changes between the two regimes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distribution::{mean_action, MeanField, MeanFieldMode, MeanFieldSlice};
use crate::env::MeanFieldEnvironment;
use crate::error::{Error, Result};
use crate::qtensor::{QTensor, VisitCounter};
use crate::rates::RateSchedule;

/// Everything a training run needs besides the environment.
#[derive(Debug, Clone)]
pub struct LearnerConfig {
    pub schedule: RateSchedule,
    /// Exploration probability of the ε-greedy policy.
    pub epsilon: f64,
    /// Discount applied in the Q backup. The example problems use 1: the
    /// accumulation problem bakes its discount into the costs, the execution
    /// problem is undiscounted.
    pub backup_discount: f64,
    /// Which population statistic to learn.
    pub mode: MeanFieldMode,
    /// Break-rule tolerances on the per-slice update norms. Early stopping
    /// is active only when both are set; otherwise the episode budget rules.
    pub tol_nu: Option<f64>,
    pub tol_q: Option<f64>,
    pub max_episodes: u64,
    /// Record a trace row every this many episodes (the final episode is
    /// always recorded).
    pub trace_every: u64,
    /// Keep the population estimate fixed at its initialization; used to
    /// validate the Q update against exact dynamic programming.
    pub freeze_mean_field: bool,
    pub seed: u64,
}

impl LearnerConfig {
    /// A configuration with everything but the schedule and seed defaulted.
    pub fn new(schedule: RateSchedule, seed: u64) -> Self {
        Self {
            schedule,
            epsilon: 0.1,
            backup_discount: 1.0,
            mode: MeanFieldMode::ActionMarginal,
            tol_nu: None,
            tol_q: None,
            max_episodes: 10_000,
            trace_every: 1,
            freeze_mean_field: false,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        if !(self.backup_discount > 0.0 && self.backup_discount <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "backup discount must lie in (0, 1], got {}",
                self.backup_discount
            )));
        }
        for (name, tol) in [("tol_nu", self.tol_nu), ("tol_q", self.tol_q)] {
            if let Some(t) = tol {
                if !(t > 0.0) {
                    return Err(Error::InvalidConfig(format!("{name} must be positive, got {t}")));
                }
            }
        }
        if self.trace_every == 0 {
            return Err(Error::InvalidConfig("trace_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Mutable learner state: the Q table, the population estimate, the visit
/// counters and the episode index.
#[derive(Debug, Clone)]
pub struct LearnerState {
    pub q: QTensor,
    pub mean_field: MeanField,
    pub visits: VisitCounter,
    pub episode: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStep {
    pub n: usize,
    pub state: usize,
    pub action: usize,
    pub cost: f64,
    /// `None` at the final time point.
    pub next_state: Option<usize>,
}

/// What one episode did: the visited path and the per-time-slice update
/// norms `‖ν^k_{t_n} − ν^{k−1}_{t_n}‖₁` and `‖Q^k_n − Q^{k−1}_n‖₁,₁` (only
/// one Q entry per slice changes per episode, so the latter is just the
/// absolute change of that entry).
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub steps: Vec<EpisodeStep>,
    pub nu_change: Vec<f64>,
    pub q_change: Vec<f64>,
}

/// ε-greedy action choice over an admissible range: the admissible argmin
/// with probability `1 − ε` (lowest index on ties), a uniform admissible
/// draw otherwise.
pub fn epsilon_greedy(
    q: &QTensor,
    n: usize,
    state: usize,
    admissible: std::ops::Range<usize>,
    epsilon: f64,
    rng: &mut impl Rng,
) -> usize {
    debug_assert!(!admissible.is_empty());
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(admissible)
    } else {
        q.argmin_over(n, state, admissible)
    }
}

/// Sampled subset of the per-episode diagnostics kept by [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub episode: u64,
    pub nu_change: Vec<f64>,
    pub q_change: Vec<f64>,
    /// `E[α_{t_n}]` under the current population estimate, per time point;
    /// NaN when the tracked statistic carries no action information.
    pub mean_actions: Vec<f64>,
}

#[derive(Debug)]
pub struct TrainResult {
    pub state: LearnerState,
    pub trace: Vec<TraceRow>,
    /// Whether the break rule fired before the episode budget ran out.
    pub converged: bool,
    pub episodes: u64,
}

/// A training run over one environment. Strictly sequential: each episode's
/// updates feed the next. Independent runs (different seeds) can execute in
/// parallel with no shared state.
pub struct Learner<'e, E: MeanFieldEnvironment> {
    env: &'e E,
    config: LearnerConfig,
    state: LearnerState,
    rng: ChaCha8Rng,
}

impl<'e, E: MeanFieldEnvironment> Learner<'e, E> {
    /// Initializes per the algorithm: `Q ≡ 0`, uniform population estimate,
    /// zero visit counts.
    pub fn new(env: &'e E, config: LearnerConfig) -> Result<Self> {
        let n_points = env.time_grid().n_points();
        let mean_field = MeanField::uniform(
            config.mode,
            n_points,
            env.states().len(),
            env.actions().len(),
        );
        Self::with_mean_field(env, config, mean_field)
    }

    /// Starts from a caller-supplied population estimate (frozen-ν studies).
    pub fn with_mean_field(
        env: &'e E,
        config: LearnerConfig,
        mean_field: MeanField,
    ) -> Result<Self> {
        config.validate()?;
        env.validate_admissibility()?;
        let n_points = env.time_grid().n_points();
        if mean_field.n_points() != n_points {
            return Err(Error::InvalidConfig(format!(
                "population estimate has {} slices, environment expects {n_points}",
                mean_field.n_points()
            )));
        }
        let state = LearnerState {
            q: QTensor::zeros(n_points, env.states().len(), env.actions().len()),
            mean_field,
            visits: VisitCounter::zeros(n_points, env.states().len(), env.actions().len()),
            episode: 0,
        };
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self { env, config, state, rng })
    }

    pub fn state(&self) -> &LearnerState {
        &self.state
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn into_state(self) -> LearnerState {
        self.state
    }

    /// Runs one episode, applying the per-step update sequence: choose
    /// action, update the population estimate, observe the environment,
    /// update the visited Q entry.
    pub fn run_episode(&mut self) -> Result<EpisodeRecord> {
        let n_steps = self.env.time_grid().n_steps();
        let episode = self.state.episode;
        // Each episode draws from its own counter-indexed stream of the
        // seeded generator, so any episode can be replayed in isolation.
        self.rng.set_stream(episode.wrapping_add(1));
        let rho_nu = self.config.schedule.rho_nu(episode);

        let mut record = EpisodeRecord {
            steps: Vec::with_capacity(n_steps + 1),
            nu_change: vec![0.0; n_steps + 1],
            q_change: vec![0.0; n_steps + 1],
        };

        let mut x = self.env.sample_initial(&mut self.rng);
        for n in 0..=n_steps {
            let action = epsilon_greedy(
                &self.state.q,
                n,
                x,
                self.env.admissible(n, x),
                self.config.epsilon,
                &mut self.rng,
            );

            if !self.config.freeze_mean_field {
                record.nu_change[n] = self.state.mean_field.observe(n, x, action, rho_nu);
            }

            // The cost is observed under the estimate just updated, exactly
            // as the update sequence above dictates.
            let population = self.state.mean_field.slice(n);
            let (cost, next_state) = if n < n_steps {
                let t = self.env.step(n, x, action, &population, &mut self.rng)?;
                (t.cost, Some(t.next_state))
            } else {
                (self.env.terminal_cost(x, &population)?, None)
            };

            let visits = self.state.visits.record(n, x, action);
            let rho_q = self.config.schedule.rho_q(n_steps, visits);
            let target = match next_state {
                Some(to) => {
                    let continuation =
                        self.state.q.min_over(n + 1, to, self.env.admissible(n + 1, to));
                    cost + self.config.backup_discount * continuation
                }
                None => cost,
            };
            let entry = self.state.q.entry_mut(n, x, action);
            let delta = rho_q * (target - *entry);
            *entry += delta;
            record.q_change[n] = delta.abs();

            record.steps.push(EpisodeStep { n, state: x, action, cost, next_state });
            if let Some(to) = next_state {
                x = to;
            }
        }

        self.state.episode += 1;
        Ok(record)
    }

    fn break_rule_met(&self, record: &EpisodeRecord) -> bool {
        match (self.config.tol_nu, self.config.tol_q) {
            (Some(tol_nu), Some(tol_q)) => {
                record.nu_change.iter().all(|c| *c <= tol_nu)
                    && record.q_change.iter().all(|c| *c < tol_q)
            }
            _ => false,
        }
    }

    fn mean_actions(&self) -> Vec<f64> {
        let actions = self.env.actions();
        (0..self.env.time_grid().n_points())
            .map(|n| match self.state.mean_field.slice(n) {
                MeanFieldSlice::Joint(nu) => nu.mean_action(actions),
                MeanFieldSlice::ActionMarginal(theta) => mean_action(theta, actions),
                MeanFieldSlice::StateMarginal(_) => f64::NAN,
            })
            .collect()
    }

    /// Runs episodes until the break rule holds for every time slice or the
    /// budget is exhausted.
    pub fn train(mut self) -> Result<TrainResult> {
        let mut trace = Vec::new();
        let mut converged = false;
        let mut episodes = 0;
        while episodes < self.config.max_episodes {
            let record = self.run_episode()?;
            episodes += 1;
            let done = self.break_rule_met(&record) || episodes == self.config.max_episodes;
            if (episodes - 1) % self.config.trace_every == 0 || done {
                trace.push(TraceRow {
                    episode: episodes - 1,
                    nu_change: record.nu_change.clone(),
                    q_change: record.q_change.clone(),
                    mean_actions: self.mean_actions(),
                });
            }
            if self.break_rule_met(&record) {
                converged = true;
                break;
            }
        }
        Ok(TrainResult { state: self.state, trace, converged, episodes })
    }

    /// The greedy control table `α(n, x)` of the current Q table.
    pub fn greedy_policy(&self) -> Vec<Vec<usize>> {
        greedy_policy(&self.state.q, |n, x| self.env.admissible(n, x))
    }
}

/// Greedy control table of a Q table under an admissibility rule.
pub fn greedy_policy(
    q: &QTensor,
    admissible: impl Fn(usize, usize) -> std::ops::Range<usize>,
) -> Vec<Vec<usize>> {
    (0..q.n_points())
        .map(|n| (0..q.n_states()).map(|x| q.argmin_over(n, x, admissible(n, x))).collect())
        .collect()
}

/// Convenience wrapper: build a learner and train it.
pub fn train<E: MeanFieldEnvironment>(env: &E, config: LearnerConfig) -> Result<TrainResult> {
    Learner::new(env, config)?.train()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::DistributionFlow;
    use crate::testing::ToyModel;
    use approx::assert_abs_diff_eq;

    fn toy_config(seed: u64) -> LearnerConfig {
        let schedule = RateSchedule::new(0.55, 0.85).unwrap();
        let mut config = LearnerConfig::new(schedule, seed);
        config.epsilon = 0.3;
        config.mode = MeanFieldMode::Joint;
        config
    }

    #[test]
    fn epsilon_zero_is_pure_argmin() {
        let mut q = QTensor::zeros(1, 1, 3);
        q.set(0, 0, 0, 3.0);
        q.set(0, 0, 1, 1.0);
        q.set(0, 0, 2, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            assert_eq!(epsilon_greedy(&q, 0, 0, 0..3, 0.0, &mut rng), 1);
        }
    }

    #[test]
    fn epsilon_one_is_uniform_over_admissible() {
        let q = QTensor::zeros(1, 1, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws = 100_000;
        let mut counts = [0u32; 4];
        for _ in 0..draws {
            counts[epsilon_greedy(&q, 0, 0, 0..4, 1.0, &mut rng)] += 1;
        }
        // χ² test against uniform at the 1% level (3 dof, critical 11.34).
        let expected = draws as f64 / 4.0;
        let chi2: f64 =
            counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 11.34, "chi2 = {chi2}, counts {counts:?}");
    }

    #[test]
    fn episodes_have_full_length_and_replay_identically() {
        let env = ToyModel::uncoupled_two_state(2);
        let run = |seed| {
            let mut learner = Learner::new(&env, toy_config(seed)).unwrap();
            (0..5).map(|_| learner.run_episode().unwrap()).collect::<Vec<_>>()
        };
        let a = run(7);
        let b = run(7);
        assert_eq!(a, b);
        for record in &a {
            assert_eq!(record.steps.len(), 3);
            assert!(record.steps.last().unwrap().next_state.is_none());
        }
        assert_ne!(run(8), a);
    }

    #[test]
    fn first_episode_overwrites_uniform_estimate() {
        let env = ToyModel::uncoupled_two_state(2);
        let mut learner = Learner::new(&env, toy_config(3)).unwrap();
        let record = learner.run_episode().unwrap();
        // ρ^ν(0) = 1: each slice is now the one-hot of its first observation.
        let first = &record.steps[0];
        match &learner.state().mean_field {
            MeanField::Joint(flow) => {
                assert_eq!(flow.slice(0).get(first.state, first.action), 1.0);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn zero_cost_environment_keeps_q_at_zero() {
        let mut env = ToyModel::uncoupled_two_state(2);
        env.running.fill(0.0);
        env.terminal = vec![0.0, 0.0];
        let mut learner = Learner::new(&env, toy_config(5)).unwrap();
        for _ in 0..200 {
            learner.run_episode().unwrap();
        }
        let q = &learner.state().q;
        for n in 0..3 {
            for x in 0..2 {
                for a in 0..2 {
                    assert_eq!(q.get(n, x, a), 0.0);
                }
            }
        }
    }

    #[test]
    fn terminal_entry_after_full_rate_update() {
        // With ω^Q = 1 and N_T = 1 the first visit uses ρ^Q = 1/2; force a
        // direct check of the terminal target instead: after the very first
        // visit the entry moves to ρ^Q · g(x).
        let env = ToyModel::uncoupled_two_state(1);
        let schedule = RateSchedule::new(1.0, 0.85).unwrap();
        let mut config = LearnerConfig::new(schedule, 11);
        config.mode = MeanFieldMode::Joint;
        config.epsilon = 1.0;
        let mut learner = Learner::new(&env, config).unwrap();
        let record = learner.run_episode().unwrap();
        let terminal = record.steps.last().unwrap();
        let expected = env.terminal[terminal.state] / 2.0; // ρ^Q = 1/(1+1)
        assert_abs_diff_eq!(
            learner.state().q.get(1, terminal.state, terminal.action),
            expected,
            epsilon = 1e-12
        );
    }

    #[test]
    fn zero_budget_returns_initialization() {
        let env = ToyModel::uncoupled_two_state(2);
        let mut config = toy_config(0);
        config.max_episodes = 0;
        let result = train(&env, config).unwrap();
        assert_eq!(result.episodes, 0);
        assert!(!result.converged);
        let zero = QTensor::zeros(3, 2, 2);
        assert_eq!(result.state.q.max_abs_difference(&zero), 0.0);
    }

    #[test]
    fn break_rule_stops_training() {
        let env = ToyModel::uncoupled_two_state(2);
        let mut config = toy_config(0);
        config.max_episodes = 100_000;
        config.tol_nu = Some(0.5);
        config.tol_q = Some(0.5);
        let result = train(&env, config).unwrap();
        assert!(result.converged);
        assert!(result.episodes < 100_000);
    }

    // Replaying the identical episode through joint and action-marginal
    // learners yields the marginal of the joint estimate.
    #[test]
    fn marginal_mode_matches_joint_marginal() {
        let env = ToyModel::uncoupled_two_state(2);
        let mut joint_cfg = toy_config(21);
        joint_cfg.mode = MeanFieldMode::Joint;
        let mut theta_cfg = toy_config(21);
        theta_cfg.mode = MeanFieldMode::ActionMarginal;
        let mut joint = Learner::new(&env, joint_cfg).unwrap();
        let mut theta = Learner::new(&env, theta_cfg).unwrap();
        for _ in 0..50 {
            let a = joint.run_episode().unwrap();
            let b = theta.run_episode().unwrap();
            // Identical seeds and an environment whose costs ignore the
            // population estimate give identical trajectories.
            assert_eq!(a.steps, b.steps);
        }
        for n in 0..3 {
            let from_joint = match &joint.state().mean_field {
                MeanField::Joint(flow) => flow.slice(n).action_marginal(),
                _ => unreachable!(),
            };
            let direct = match theta.state().mean_field.slice(n) {
                MeanFieldSlice::ActionMarginal(t) => t.to_owned(),
                _ => unreachable!(),
            };
            for (a, b) in from_joint.iter().zip(direct.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn state_marginal_mode_trains_on_uncoupled_env() {
        let env = ToyModel::uncoupled_two_state(2);
        let mut config = toy_config(2);
        config.mode = MeanFieldMode::StateMarginal;
        config.max_episodes = 500;
        let result = train(&env, config).unwrap();
        assert_eq!(result.episodes, 500);
        assert!(result.state.q.is_finite());
        assert!(result.trace.last().unwrap().mean_actions[0].is_nan());
    }

    // Against a frozen population the update is plain finite-horizon
    // Q-learning, which must approach the dynamic-programming table.
    #[test]
    fn frozen_population_converges_to_dp() {
        let env = ToyModel::uncoupled_two_state(2);
        let mut config = toy_config(13);
        config.freeze_mean_field = true;
        config.epsilon = 1.0; // uniform exploration visits everything
        config.max_episodes = 100_000;
        let result = train(&env, config).unwrap();
        let flow = DistributionFlow::uniform(3, 2, 2);
        let oracle = crate::deterministic::backward_bellman(&env, &flow).unwrap();
        let gap = result.state.q.max_abs_difference(&oracle);
        assert!(gap < 0.05, "max-entry gap {gap}");
    }

    #[test]
    fn greedy_policy_tie_breaks_to_lowest_admissible() {
        let env = ToyModel::uncoupled_two_state(1);
        let learner = Learner::new(&env, toy_config(0)).unwrap();
        let policy = learner.greedy_policy();
        for row in policy {
            assert!(row.iter().all(|&a| a == 0));
        }
    }
}
