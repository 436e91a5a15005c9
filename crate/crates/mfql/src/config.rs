//! Experiment configuration: file schema, defaults and validation.
//!
//! A run is fully determined by a small TOML file (or command-line flags
//! overriding it). Every optional field has a default derived from the
//! problem/regime pair, and the fully resolved configuration is echoed to
//! the output directory as `manifest.toml`, from which the run can be
//! reproduced byte for byte.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use meanfield::distribution::MeanFieldMode;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    Hara,
    Trader,
}

impl std::str::FromStr for Problem {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hara" => Ok(Problem::Hara),
            "trader" => Ok(Problem::Trader),
            other => bail!("unknown problem {other:?}, expected `hara` or `trader`"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Mfg,
    Mfc,
}

impl std::str::FromStr for Regime {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mfg" => Ok(Regime::Mfg),
            "mfc" => Ok(Regime::Mfc),
            other => bail!("unknown regime {other:?}, expected `mfg` or `mfc`"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrackedStatistic {
    Joint,
    StateMarginal,
    ActionMarginal,
}

impl From<TrackedStatistic> for MeanFieldMode {
    fn from(value: TrackedStatistic) -> Self {
        match value {
            TrackedStatistic::Joint => MeanFieldMode::Joint,
            TrackedStatistic::StateMarginal => MeanFieldMode::StateMarginal,
            TrackedStatistic::ActionMarginal => MeanFieldMode::ActionMarginal,
        }
    }
}

/// Learner block of the resolved configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnerSection {
    pub omega_q: f64,
    pub omega_nu: f64,
    pub epsilon: f64,
    pub backup_discount: f64,
    pub mode: TrackedStatistic,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_nu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_q: Option<f64>,
}

/// Accumulation-problem parameters (resolved).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HaraSection {
    pub productivity: f64,
    pub discount: f64,
    pub utility_exponent: f64,
    pub noise_values: Vec<f64>,
    pub noise_probs: Vec<f64>,
    pub n_periods: usize,
    pub grid_upper: f64,
    pub grid_step: f64,
    pub initial_lower: f64,
    pub initial_upper: f64,
}

impl Default for HaraSection {
    fn default() -> Self {
        Self {
            productivity: 3.0,
            discount: 0.95,
            utility_exponent: 0.2,
            noise_values: vec![0.9, 1.3],
            noise_probs: vec![0.75, 0.25],
            n_periods: 2,
            grid_upper: 4.0,
            grid_step: 0.05,
            initial_lower: 0.0,
            initial_upper: 1.0,
        }
    }
}

/// Execution-problem parameters (resolved). Grid bounds default per regime.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraderSection {
    pub trading_cost: f64,
    pub inventory_cost: f64,
    pub terminal_cost: f64,
    pub price_impact: f64,
    pub volatility: f64,
    pub horizon: f64,
    pub n_steps: usize,
    pub state_lower: f64,
    pub state_upper: f64,
    pub action_lower: f64,
    pub action_upper: f64,
    pub grid_step: f64,
    pub initial_mean: f64,
    pub initial_sd: f64,
}

impl TraderSection {
    pub fn regime_default(regime: Regime) -> Self {
        let (state_lower, state_upper, action_lower, action_upper) = match regime {
            Regime::Mfg => (-1.5, 1.75, -2.5, 1.0),
            Regime::Mfc => (-0.75, 4.0, -0.25, 5.0),
        };
        Self {
            trading_cost: 1.0,
            inventory_cost: 2.0,
            terminal_cost: 0.3,
            price_impact: 1.75,
            volatility: 0.5,
            horizon: 1.0,
            n_steps: 16,
            state_lower,
            state_upper,
            action_lower,
            action_upper,
            grid_step: 0.25,
            initial_mean: 0.5,
            initial_sd: 0.3,
        }
    }
}

/// Deterministic-iteration block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedPointSection {
    pub max_iters: usize,
    pub tol: f64,
    pub omega_q: f64,
    pub omega_nu: f64,
}

impl Default for FixedPointSection {
    fn default() -> Self {
        Self { max_iters: 2000, tol: 1e-9, omega_q: 0.0, omega_nu: 0.55 }
    }
}

/// The fully resolved experiment configuration; this is what `manifest.toml`
/// contains.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub problem: Problem,
    pub regime: Regime,
    pub runs: usize,
    pub episodes: u64,
    pub base_seed: u64,
    /// Worker threads for parallel runs; 0 means one per run.
    pub workers: usize,
    pub out_dir: PathBuf,
    /// Trace sampling interval for the per-episode CSVs.
    pub trace_every: u64,
    /// State-visit threshold used by `compare`.
    pub occupancy_threshold: u64,
    pub learner: LearnerSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hara: Option<HaraSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trader: Option<TraderSection>,
    pub fixed_point: FixedPointSection,
}

/// The on-disk schema: everything optional except `problem` and `regime`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub schema_version: Option<u32>,
    pub problem: Option<Problem>,
    pub regime: Option<Regime>,
    pub runs: Option<usize>,
    pub episodes: Option<u64>,
    pub base_seed: Option<u64>,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub trace_every: Option<u64>,
    pub occupancy_threshold: Option<u64>,
    pub learner: Option<RawLearnerSection>,
    pub hara: Option<RawHaraSection>,
    pub trader: Option<RawTraderSection>,
    pub fixed_point: Option<RawFixedPointSection>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLearnerSection {
    pub omega_q: Option<f64>,
    pub omega_nu: Option<f64>,
    pub epsilon: Option<f64>,
    pub backup_discount: Option<f64>,
    pub mode: Option<TrackedStatistic>,
    pub tol_nu: Option<f64>,
    pub tol_q: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawHaraSection {
    pub productivity: Option<f64>,
    pub discount: Option<f64>,
    pub utility_exponent: Option<f64>,
    pub noise_values: Option<Vec<f64>>,
    pub noise_probs: Option<Vec<f64>>,
    pub n_periods: Option<usize>,
    pub grid_upper: Option<f64>,
    pub grid_step: Option<f64>,
    pub initial_lower: Option<f64>,
    pub initial_upper: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTraderSection {
    pub trading_cost: Option<f64>,
    pub inventory_cost: Option<f64>,
    pub terminal_cost: Option<f64>,
    pub price_impact: Option<f64>,
    pub volatility: Option<f64>,
    pub horizon: Option<f64>,
    pub n_steps: Option<usize>,
    pub state_lower: Option<f64>,
    pub state_upper: Option<f64>,
    pub action_lower: Option<f64>,
    pub action_upper: Option<f64>,
    pub grid_step: Option<f64>,
    pub initial_mean: Option<f64>,
    pub initial_sd: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFixedPointSection {
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub omega_q: Option<f64>,
    pub omega_nu: Option<f64>,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub problem: Option<Problem>,
    pub regime: Option<Regime>,
    pub episodes: Option<u64>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
}

/// The learning-rate exponents the experiments in this crate default to,
/// keyed by problem and regime: the competitive regime updates the Q table
/// faster than the distribution, the cooperative regime does the opposite.
pub fn default_rates(problem: Problem, regime: Regime) -> (f64, f64) {
    match (problem, regime) {
        (Problem::Hara, Regime::Mfg) => (0.55, 0.85),
        (Problem::Hara, Regime::Mfc) => (0.7, 0.05),
        (Problem::Trader, Regime::Mfg) => (0.55, 0.85),
        (Problem::Trader, Regime::Mfc) => (0.65, 0.15),
    }
}

fn default_epsilon(problem: Problem) -> f64 {
    match problem {
        Problem::Hara => 0.15,
        Problem::Trader => 0.1,
    }
}

fn default_episodes(problem: Problem) -> u64 {
    match problem {
        Problem::Hara => 1_000_000,
        Problem::Trader => 2_000_000,
    }
}

impl ExperimentConfig {
    /// Resolves a raw file plus command-line overrides into a complete
    /// configuration, filling defaults from the problem/regime pair.
    pub fn resolve(raw: RawConfig, overrides: &Overrides) -> Result<Self> {
        if let Some(v) = raw.schema_version {
            if v != SCHEMA_VERSION {
                bail!("unsupported schema_version {v}, this build reads {SCHEMA_VERSION}");
            }
        }
        let problem = overrides
            .problem
            .or(raw.problem)
            .context("missing required field `problem` (hara or trader)")?;
        let regime = overrides
            .regime
            .or(raw.regime)
            .context("missing required field `regime` (mfg or mfc)")?;
        let (omega_q, omega_nu) = default_rates(problem, regime);
        let raw_learner = raw.learner.unwrap_or_default();
        let episodes = overrides
            .episodes
            .or(raw.episodes)
            .unwrap_or_else(|| default_episodes(problem));
        let config = Self {
            schema_version: SCHEMA_VERSION,
            problem,
            regime,
            runs: overrides.runs.or(raw.runs).unwrap_or(10),
            episodes,
            base_seed: overrides.seed.or(raw.base_seed).unwrap_or(0),
            workers: overrides.workers.or(raw.workers).unwrap_or(0),
            out_dir: overrides
                .out_dir
                .clone()
                .or(raw.out_dir)
                .unwrap_or_else(|| PathBuf::from("out")),
            trace_every: raw.trace_every.unwrap_or_else(|| (episodes / 1000).max(1)),
            occupancy_threshold: raw.occupancy_threshold.unwrap_or(100),
            learner: LearnerSection {
                omega_q: raw_learner.omega_q.unwrap_or(omega_q),
                omega_nu: raw_learner.omega_nu.unwrap_or(omega_nu),
                epsilon: raw_learner.epsilon.unwrap_or_else(|| default_epsilon(problem)),
                backup_discount: raw_learner.backup_discount.unwrap_or(1.0),
                mode: raw_learner.mode.unwrap_or(TrackedStatistic::ActionMarginal),
                tol_nu: raw_learner.tol_nu,
                tol_q: raw_learner.tol_q,
            },
            hara: match problem {
                Problem::Hara => {
                    let d = HaraSection::default();
                    let r = raw.hara.unwrap_or_default();
                    Some(HaraSection {
                        productivity: r.productivity.unwrap_or(d.productivity),
                        discount: r.discount.unwrap_or(d.discount),
                        utility_exponent: r.utility_exponent.unwrap_or(d.utility_exponent),
                        noise_values: r.noise_values.unwrap_or(d.noise_values),
                        noise_probs: r.noise_probs.unwrap_or(d.noise_probs),
                        n_periods: r.n_periods.unwrap_or(d.n_periods),
                        grid_upper: r.grid_upper.unwrap_or(d.grid_upper),
                        grid_step: r.grid_step.unwrap_or(d.grid_step),
                        initial_lower: r.initial_lower.unwrap_or(d.initial_lower),
                        initial_upper: r.initial_upper.unwrap_or(d.initial_upper),
                    })
                }
                Problem::Trader => {
                    if raw.hara.is_some() {
                        bail!("config has a [hara] section but `problem` is trader");
                    }
                    None
                }
            },
            trader: match problem {
                Problem::Trader => {
                    let d = TraderSection::regime_default(regime);
                    let r = raw.trader.unwrap_or_default();
                    Some(TraderSection {
                        trading_cost: r.trading_cost.unwrap_or(d.trading_cost),
                        inventory_cost: r.inventory_cost.unwrap_or(d.inventory_cost),
                        terminal_cost: r.terminal_cost.unwrap_or(d.terminal_cost),
                        price_impact: r.price_impact.unwrap_or(d.price_impact),
                        volatility: r.volatility.unwrap_or(d.volatility),
                        horizon: r.horizon.unwrap_or(d.horizon),
                        n_steps: r.n_steps.unwrap_or(d.n_steps),
                        state_lower: r.state_lower.unwrap_or(d.state_lower),
                        state_upper: r.state_upper.unwrap_or(d.state_upper),
                        action_lower: r.action_lower.unwrap_or(d.action_lower),
                        action_upper: r.action_upper.unwrap_or(d.action_upper),
                        grid_step: r.grid_step.unwrap_or(d.grid_step),
                        initial_mean: r.initial_mean.unwrap_or(d.initial_mean),
                        initial_sd: r.initial_sd.unwrap_or(d.initial_sd),
                    })
                }
                Problem::Hara => {
                    if raw.trader.is_some() {
                        bail!("config has a [trader] section but `problem` is hara");
                    }
                    None
                }
            },
            fixed_point: {
                let d = FixedPointSection::default();
                let r = raw.fixed_point.unwrap_or_default();
                FixedPointSection {
                    max_iters: r.max_iters.unwrap_or(d.max_iters),
                    tol: r.tol.unwrap_or(d.tol),
                    omega_q: r.omega_q.unwrap_or(d.omega_q),
                    omega_nu: r.omega_nu.unwrap_or(d.omega_nu),
                }
            },
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            bail!("field `runs` must be at least 1");
        }
        if self.trace_every == 0 {
            bail!("field `trace_every` must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.learner.epsilon) {
            bail!("field `learner.epsilon` must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn from_file(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let raw: RawConfig = toml::from_str(&text)
            .with_context(|| format!("cannot parse config file {}", path.display()))?;
        Self::resolve(raw, overrides)
    }

    /// Number of worker threads to use for the configured runs.
    pub fn effective_workers(&self) -> usize {
        if self.workers == 0 {
            self.runs
        } else {
            self.workers
        }
    }

    pub fn manifest_toml(&self) -> String {
        toml::to_string_pretty(self).expect("manifest serializes")
    }
}
