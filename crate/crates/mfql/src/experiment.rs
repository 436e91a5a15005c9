//! Builds environments from configuration and orchestrates multi-seed
//! training, benchmark solving and deterministic fixed-point runs.

use std::time::Instant;

use anyhow::{Context, Result};
use meanfield::benchmarks::{
    evaluate_feedback_policy, hara_mfg_solve, mfc_policy_enumeration_oracle, trader_mfc_solve,
    trader_mfg_solve,
};
use meanfield::deterministic::{
    damped_iteration, greedy_control, DampedIteration, DampingSchedule, SliceContext,
    TabularModel,
};
use meanfield::distribution::{MeanFieldSlice, StateActionDistribution};
use meanfield::env::{
    HaraEnvironment, HaraParams, InitialLaw, MeanFieldEnvironment, TraderEnvironment,
    TraderParams, Transition,
};
use meanfield::grid::{DiscreteSpace, TimeGrid};
use meanfield::qlearning::{train, LearnerConfig, TraceRow};
use meanfield::rates::RateSchedule;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Problem, Regime};

/// Either of the two concrete problems, dispatching both the sampling
/// environment and the exact-model interfaces.
pub enum ProblemEnv {
    Hara(HaraEnvironment),
    Trader(TraderEnvironment),
}

impl MeanFieldEnvironment for ProblemEnv {
    fn time_grid(&self) -> &TimeGrid {
        match self {
            ProblemEnv::Hara(env) => env.time_grid(),
            ProblemEnv::Trader(env) => env.time_grid(),
        }
    }

    fn states(&self) -> &DiscreteSpace {
        match self {
            ProblemEnv::Hara(env) => env.states(),
            ProblemEnv::Trader(env) => env.states(),
        }
    }

    fn actions(&self) -> &DiscreteSpace {
        match self {
            ProblemEnv::Hara(env) => env.actions(),
            ProblemEnv::Trader(env) => env.actions(),
        }
    }

    fn admissible(&self, n: usize, state: usize) -> std::ops::Range<usize> {
        match self {
            ProblemEnv::Hara(env) => MeanFieldEnvironment::admissible(env, n, state),
            ProblemEnv::Trader(env) => MeanFieldEnvironment::admissible(env, n, state),
        }
    }

    fn sample_initial(&self, rng: &mut dyn rand::RngCore) -> usize {
        match self {
            ProblemEnv::Hara(env) => env.sample_initial(rng),
            ProblemEnv::Trader(env) => env.sample_initial(rng),
        }
    }

    fn step(
        &self,
        n: usize,
        state: usize,
        action: usize,
        population: &MeanFieldSlice<'_>,
        rng: &mut dyn rand::RngCore,
    ) -> meanfield::Result<Transition> {
        match self {
            ProblemEnv::Hara(env) => env.step(n, state, action, population, rng),
            ProblemEnv::Trader(env) => env.step(n, state, action, population, rng),
        }
    }

    fn terminal_cost(
        &self,
        state: usize,
        population: &MeanFieldSlice<'_>,
    ) -> meanfield::Result<f64> {
        match self {
            ProblemEnv::Hara(env) => {
                MeanFieldEnvironment::terminal_cost(env, state, population)
            }
            ProblemEnv::Trader(env) => {
                MeanFieldEnvironment::terminal_cost(env, state, population)
            }
        }
    }
}

impl TabularModel for ProblemEnv {
    fn n_states(&self) -> usize {
        match self {
            ProblemEnv::Hara(env) => TabularModel::n_states(env),
            ProblemEnv::Trader(env) => TabularModel::n_states(env),
        }
    }

    fn n_actions(&self) -> usize {
        match self {
            ProblemEnv::Hara(env) => TabularModel::n_actions(env),
            ProblemEnv::Trader(env) => TabularModel::n_actions(env),
        }
    }

    fn n_steps(&self) -> usize {
        match self {
            ProblemEnv::Hara(env) => TabularModel::n_steps(env),
            ProblemEnv::Trader(env) => TabularModel::n_steps(env),
        }
    }

    fn initial_distribution(&self) -> Vec<f64> {
        match self {
            ProblemEnv::Hara(env) => TabularModel::initial_distribution(env),
            ProblemEnv::Trader(env) => TabularModel::initial_distribution(env),
        }
    }

    fn admissible(&self, n: usize, state: usize) -> std::ops::Range<usize> {
        match self {
            ProblemEnv::Hara(env) => TabularModel::admissible(env, n, state),
            ProblemEnv::Trader(env) => TabularModel::admissible(env, n, state),
        }
    }

    fn prepare(&self, n: usize, nu: &StateActionDistribution) -> SliceContext {
        match self {
            ProblemEnv::Hara(env) => env.prepare(n, nu),
            ProblemEnv::Trader(env) => env.prepare(n, nu),
        }
    }

    fn transition_into(
        &self,
        n: usize,
        state: usize,
        action: usize,
        ctx: &SliceContext,
        out: &mut [f64],
    ) {
        match self {
            ProblemEnv::Hara(env) => env.transition_into(n, state, action, ctx, out),
            ProblemEnv::Trader(env) => env.transition_into(n, state, action, ctx, out),
        }
    }

    fn running_cost(&self, n: usize, state: usize, action: usize, ctx: &SliceContext) -> f64 {
        match self {
            ProblemEnv::Hara(env) => env.running_cost(n, state, action, ctx),
            ProblemEnv::Trader(env) => env.running_cost(n, state, action, ctx),
        }
    }

    fn terminal_cost(&self, state: usize, state_marginal: &[f64]) -> f64 {
        match self {
            ProblemEnv::Hara(env) => TabularModel::terminal_cost(env, state, state_marginal),
            ProblemEnv::Trader(env) => TabularModel::terminal_cost(env, state, state_marginal),
        }
    }
}

/// Instantiates the configured environment.
pub fn build_environment(config: &ExperimentConfig) -> Result<ProblemEnv> {
    match config.problem {
        Problem::Hara => {
            let section = config.hara.as_ref().expect("resolved config has hara section");
            let params = HaraParams {
                noise: section
                    .noise_values
                    .iter()
                    .zip(section.noise_probs.iter())
                    .map(|(&w, &p)| (w, p))
                    .collect(),
                productivity: section.productivity,
                discount: section.discount,
                utility_exponent: section.utility_exponent,
            };
            let env = HaraEnvironment::new(
                params,
                TimeGrid::new(section.n_periods as f64, section.n_periods)?,
                DiscreteSpace::new(0.0, section.grid_upper, section.grid_step)?,
                DiscreteSpace::new(0.0, section.grid_upper, section.grid_step)?,
                InitialLaw::Uniform {
                    lower: section.initial_lower,
                    upper: section.initial_upper,
                },
            )?;
            Ok(ProblemEnv::Hara(env))
        }
        Problem::Trader => {
            let section = config.trader.as_ref().expect("resolved config has trader section");
            let params = TraderParams {
                trading_cost: section.trading_cost,
                inventory_cost: section.inventory_cost,
                terminal_cost: section.terminal_cost,
                price_impact: section.price_impact,
                volatility: section.volatility,
                horizon: section.horizon,
            };
            let env = TraderEnvironment::new(
                params,
                TimeGrid::new(section.horizon, section.n_steps)?,
                DiscreteSpace::new(section.state_lower, section.state_upper, section.grid_step)?,
                DiscreteSpace::new(
                    section.action_lower,
                    section.action_upper,
                    section.grid_step,
                )?,
                InitialLaw::Gaussian { mean: section.initial_mean, sd: section.initial_sd },
            )?;
            Ok(ProblemEnv::Trader(env))
        }
    }
}

/// Everything one seeded training run produces.
pub struct RunOutput {
    pub seed: u64,
    /// Greedy control values per `(time index, state index)`.
    pub controls: Vec<Vec<f64>>,
    /// State visits per `(time index, state index)`.
    pub occupancy: Vec<Vec<u64>>,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    pub episodes: u64,
    pub wall_secs: f64,
}

pub struct TrainingOutput {
    pub runs: Vec<RunOutput>,
    /// Elementwise means over the runs.
    pub averaged_controls: Vec<Vec<f64>>,
    pub averaged_occupancy: Vec<Vec<f64>>,
    /// Rows `(episode, per-time-point E[action])`, truncated to the trace
    /// length every run reached.
    pub averaged_meanfield: Vec<(u64, Vec<f64>)>,
}

fn learner_config(config: &ExperimentConfig, seed: u64) -> Result<LearnerConfig> {
    let schedule = RateSchedule::new(config.learner.omega_q, config.learner.omega_nu)?;
    let mut learner = LearnerConfig::new(schedule, seed);
    learner.epsilon = config.learner.epsilon;
    learner.backup_discount = config.learner.backup_discount;
    learner.mode = config.learner.mode.into();
    learner.tol_nu = config.learner.tol_nu;
    learner.tol_q = config.learner.tol_q;
    learner.max_episodes = config.episodes;
    learner.trace_every = config.trace_every;
    Ok(learner)
}

fn single_run(env: &ProblemEnv, config: &ExperimentConfig, index: usize) -> Result<RunOutput> {
    let seed = config.base_seed + index as u64;
    let started = Instant::now();
    let result = train(env, learner_config(config, seed)?)?;
    let n_points = env.time_grid().n_points();
    let nx = env.states().len();
    let controls = (0..n_points)
        .map(|n| {
            (0..nx)
                .map(|x| {
                    let a = result.state.q.argmin_over(
                        n,
                        x,
                        MeanFieldEnvironment::admissible(env, n, x),
                    );
                    env.actions().value(a)
                })
                .collect()
        })
        .collect();
    let occupancy = (0..n_points)
        .map(|n| (0..nx).map(|x| result.state.visits.state_occupancy(n, x)).collect())
        .collect();
    Ok(RunOutput {
        seed,
        controls,
        occupancy,
        trace: result.trace,
        converged: result.converged,
        episodes: result.episodes,
        wall_secs: started.elapsed().as_secs_f64(),
    })
}

/// Runs the configured number of seeded training runs on a worker pool and
/// averages the resulting tables.
pub fn run_training(env: &ProblemEnv, config: &ExperimentConfig) -> Result<TrainingOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.effective_workers().min(config.runs).max(1))
        .build()
        .context("cannot build worker pool")?;
    let runs: Vec<RunOutput> = pool.install(|| {
        (0..config.runs)
            .into_par_iter()
            .map(|i| single_run(env, config, i))
            .collect::<Result<Vec<_>>>()
    })?;

    let n_points = env.time_grid().n_points();
    let nx = env.states().len();
    let denom = config.runs as f64;
    let mut averaged_controls = vec![vec![0.0; nx]; n_points];
    let mut averaged_occupancy = vec![vec![0.0; nx]; n_points];
    for run in &runs {
        for n in 0..n_points {
            for x in 0..nx {
                averaged_controls[n][x] += run.controls[n][x] / denom;
                averaged_occupancy[n][x] += run.occupancy[n][x] as f64 / denom;
            }
        }
    }
    // Average the mean-field traces over the rows present in every run.
    let common = runs.iter().map(|r| r.trace.len()).min().unwrap_or(0);
    let averaged_meanfield = (0..common)
        .map(|row| {
            let episode = runs[0].trace[row].episode;
            let means = (0..n_points)
                .map(|n| {
                    runs.iter().map(|r| r.trace[row].mean_actions[n]).sum::<f64>() / denom
                })
                .collect();
            (episode, means)
        })
        .collect();
    Ok(TrainingOutput { runs, averaged_controls, averaged_occupancy, averaged_meanfield })
}

/// Benchmark tables evaluated on the learner's grids.
pub struct BenchmarkTables {
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    /// Feedback control per `(time index, state index)`.
    pub control: Vec<Vec<f64>>,
    /// Population mean control per time index.
    pub mean_control: Vec<f64>,
    /// Problem-specific coefficient columns, one row per time point.
    pub coefficient_headers: Vec<&'static str>,
    pub coefficients: Vec<Vec<f64>>,
}

/// Mean of the exact (projected) initial state distribution.
pub fn initial_mean_state(env: &ProblemEnv) -> f64 {
    TabularModel::initial_distribution(env)
        .iter()
        .enumerate()
        .map(|(i, w)| w * env.states().value(i))
        .sum()
}

/// Cap on the feedback-policy enumeration used when the cooperative
/// accumulation benchmark is requested.
pub const ENUMERATION_CAP: u64 = 10_000_000;

/// Solves the configured benchmark. For the cooperative accumulation
/// problem this is exact policy enumeration, which only exists at tiny
/// sizes; larger instances surface the search-space error.
pub fn benchmark_tables(env: &ProblemEnv, config: &ExperimentConfig) -> Result<BenchmarkTables> {
    let times = env.time_grid().points();
    let states: Vec<f64> = env.states().values().collect();
    match (config.problem, config.regime, env) {
        (Problem::Hara, Regime::Mfg, ProblemEnv::Hara(hara)) => {
            let solution = hara_mfg_solve(
                hara.params(),
                initial_mean_state(env),
                env.time_grid().n_steps(),
            )?;
            let control = (0..times.len())
                .map(|n| states.iter().map(|&x| solution.control(n, x)).collect())
                .collect();
            let mean_control = (0..times.len()).map(|n| solution.mean_control(n)).collect();
            let coefficients = (0..times.len())
                .map(|n| {
                    vec![
                        times[n],
                        solution.mean_control(n),
                        solution.value_coefficients[n],
                    ]
                })
                .collect();
            Ok(BenchmarkTables {
                times,
                states,
                control,
                mean_control,
                coefficient_headers: vec!["t", "z", "d"],
                coefficients,
            })
        }
        (Problem::Hara, Regime::Mfc, _) => {
            let oracle = mfc_policy_enumeration_oracle(env, ENUMERATION_CAP)?;
            let control: Vec<Vec<f64>> = oracle
                .policy
                .iter()
                .map(|row| row.iter().map(|&a| env.actions().value(a)).collect())
                .collect();
            // Mean control under the policy's own induced flow.
            let mean_control = policy_mean_controls(env, &oracle.policy)?;
            let coefficients = (0..times.len())
                .map(|n| vec![times[n], oracle.cost])
                .collect();
            Ok(BenchmarkTables {
                times,
                states,
                control,
                mean_control,
                coefficient_headers: vec!["t", "optimal_cost"],
                coefficients,
            })
        }
        (Problem::Trader, Regime::Mfg, ProblemEnv::Trader(trader)) => {
            let solution =
                trader_mfg_solve(trader.params(), initial_mean_state(env), env.time_grid())?;
            let control = (0..times.len())
                .map(|n| states.iter().map(|&x| solution.control(n, x)).collect())
                .collect();
            let mean_control = (0..times.len()).map(|n| solution.mean_control(n)).collect();
            let coefficients = (0..times.len())
                .map(|n| {
                    vec![
                        times[n],
                        solution.individual_slope[n],
                        solution.mean_slope[n],
                        solution.mean_state[n],
                        solution.intercept[n],
                    ]
                })
                .collect();
            Ok(BenchmarkTables {
                times,
                states,
                control,
                mean_control,
                coefficient_headers: vec!["t", "eta", "eta_bar", "x_bar", "chi"],
                coefficients,
            })
        }
        (Problem::Trader, Regime::Mfc, ProblemEnv::Trader(trader)) => {
            let solution =
                trader_mfc_solve(trader.params(), initial_mean_state(env), env.time_grid())?;
            let control = (0..times.len())
                .map(|n| states.iter().map(|&x| solution.control(n, x)).collect())
                .collect();
            let mean_control = (0..times.len()).map(|n| solution.mean_control(n)).collect();
            let coefficients = (0..times.len())
                .map(|n| {
                    vec![
                        times[n],
                        solution.individual_slope[n],
                        solution.mean_slope[n],
                        solution.mean_state[n],
                        solution.intercept[n],
                    ]
                })
                .collect();
            Ok(BenchmarkTables {
                times,
                states,
                control,
                mean_control,
                coefficient_headers: vec!["t", "phi", "phi_bar", "x_bar", "psi"],
                coefficients,
            })
        }
        _ => unreachable!("environment matches configured problem"),
    }
}

/// `E[α_{t_n}]` per time point under a feedback policy's induced dynamics.
fn policy_mean_controls(env: &ProblemEnv, policy: &[Vec<usize>]) -> Result<Vec<f64>> {
    let nx = TabularModel::n_states(env);
    let n_steps = TabularModel::n_steps(env);
    let mut mu = TabularModel::initial_distribution(env);
    let mut means = Vec::with_capacity(n_steps + 1);
    let mut row = vec![0.0; nx];
    for (n, controls) in policy.iter().enumerate().take(n_steps + 1) {
        means.push(
            (0..nx)
                .map(|x| mu[x] * env.actions().value(controls[x]))
                .sum(),
        );
        if n < n_steps {
            let mut weights = ndarray::Array2::zeros((nx, TabularModel::n_actions(env)));
            for x in 0..nx {
                weights[(x, controls[x])] = mu[x];
            }
            let nu = StateActionDistribution::from_weights(weights)?;
            let ctx = env.prepare(n, &nu);
            let mut next = vec![0.0; nx];
            for x in 0..nx {
                if mu[x] == 0.0 {
                    continue;
                }
                env.transition_into(n, x, controls[x], &ctx, &mut row);
                for (to, p) in row.iter().enumerate() {
                    next[to] += mu[x] * p;
                }
            }
            mu = next;
        }
    }
    Ok(means)
}

pub struct FixedPointOutput {
    pub iteration: DampedIteration,
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    /// Greedy control values of the fixed-point Q table.
    pub controls: Vec<Vec<f64>>,
}

/// Runs the damped deterministic iteration on the exact kernel of the
/// configured problem.
pub fn run_fixed_point(env: &ProblemEnv, config: &ExperimentConfig) -> Result<FixedPointOutput> {
    let schedule =
        DampingSchedule::new(config.fixed_point.omega_q, config.fixed_point.omega_nu)?;
    let iteration =
        damped_iteration(env, schedule, config.fixed_point.max_iters, config.fixed_point.tol)?;
    let policy = greedy_control(env, &iteration.q);
    let controls = policy
        .iter()
        .map(|row| row.iter().map(|&a| env.actions().value(a)).collect())
        .collect();
    Ok(FixedPointOutput {
        iteration,
        times: env.time_grid().points(),
        states: env.states().values().collect(),
        controls,
    })
}

/// Exact cooperative cost of a control table, exposed for reports.
pub fn policy_cost(env: &ProblemEnv, policy: &[Vec<usize>]) -> Result<f64> {
    Ok(evaluate_feedback_policy(env, policy)?)
}
