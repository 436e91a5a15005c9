use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use mfql::config::{ExperimentConfig, Overrides, Problem, RawConfig, Regime};
use mfql::{experiment, report};

#[derive(Parser)]
#[command(
    name = "mfql",
    about = "Two-timescale mean-field Q-learning experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Configuration file (TOML); flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Problem to solve: hara or trader.
    #[arg(long)]
    problem: Option<Problem>,
    /// Solution concept to learn: mfg (competitive) or mfc (cooperative).
    #[arg(long)]
    regime: Option<Regime>,
    /// Episode budget per run.
    #[arg(long)]
    episodes: Option<u64>,
    /// Number of seeded runs to average.
    #[arg(long)]
    runs: Option<usize>,
    /// Base seed; run i uses seed base + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per run).
    #[arg(long)]
    workers: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let overrides = Overrides {
            problem: self.problem,
            regime: self.regime,
            episodes: self.episodes,
            runs: self.runs,
            seed: self.seed,
            out_dir: self.out.clone(),
            workers: self.workers,
        };
        match &self.config {
            Some(path) => ExperimentConfig::from_file(path, &overrides),
            None => ExperimentConfig::resolve(RawConfig::default(), &overrides),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded training runs and write per-run and averaged reports.
    Train(ConfigArgs),
    /// Solve the configured benchmark and write its tables.
    Benchmark(ConfigArgs),
    /// Compare a training output directory against a benchmark directory.
    Compare {
        /// Directory written by `train`.
        train_dir: PathBuf,
        /// Directory written by `benchmark`.
        bench_dir: PathBuf,
        /// Output directory for the comparison report (default: train dir).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Minimum average state visits for a state to enter the metrics.
        #[arg(long)]
        occupancy_threshold: Option<f64>,
    },
    /// Run the damped deterministic iteration on the exact kernel.
    FixedPoint(ConfigArgs),
}

/// 0 = success, 1 = validation or I/O error, 2 = solver or convergence
/// failure.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<meanfield::Error>().is_some() {
        2
    } else {
        1
    }
}

fn cmd_train(args: &ConfigArgs) -> Result<()> {
    let config = args.resolve()?;
    let env = experiment::build_environment(&config)?;
    let benchmark = match experiment::benchmark_tables(&env, &config) {
        Ok(tables) => Some(tables),
        Err(err) => match err.downcast_ref::<meanfield::Error>() {
            Some(meanfield::Error::SearchSpaceTooLarge { .. }) => {
                eprintln!(
                    "note: no benchmark at this size ({err}); benchmark_action left empty"
                );
                None
            }
            _ => return Err(err),
        },
    };
    let output = experiment::run_training(&env, &config)?;
    report::write_training_reports(&env, &config, &output, benchmark.as_ref())?;
    for run in &output.runs {
        eprintln!(
            "run seed {} finished: {} episodes, converged={}, {:.2}s",
            run.seed, run.episodes, run.converged, run.wall_secs
        );
    }
    println!("wrote training reports to {}", config.out_dir.display());
    Ok(())
}

fn cmd_benchmark(args: &ConfigArgs) -> Result<()> {
    let config = args.resolve()?;
    let env = experiment::build_environment(&config)?;
    let tables = experiment::benchmark_tables(&env, &config)?;
    report::write_benchmark_reports(&config, &tables)?;
    println!("wrote benchmark tables to {}", config.out_dir.display());
    Ok(())
}

fn cmd_compare(
    train_dir: &PathBuf,
    bench_dir: &PathBuf,
    out: Option<PathBuf>,
    occupancy_threshold: Option<f64>,
) -> Result<()> {
    let threshold = occupancy_threshold.unwrap_or(100.0);
    let rows = report::compare_directories(train_dir, bench_dir, threshold)?;
    let out_dir = out.unwrap_or_else(|| train_dir.clone());
    let path = report::write_comparison(&out_dir, &rows)?;
    for row in &rows {
        println!(
            "n={:>3}: {:>3} states, Linf {:.3} steps, L1 {:.3} steps, mean-action error {:.4}",
            row.n,
            row.states_compared,
            row.linf_grid_steps,
            row.l1_grid_steps,
            row.mean_action_abs_error
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_fixed_point(args: &ConfigArgs) -> Result<()> {
    let config = args.resolve()?;
    let env = experiment::build_environment(&config)?;
    let output = experiment::run_fixed_point(&env, &config)?;
    report::write_fixed_point_reports(&config, &output)?;
    println!(
        "fixed point: converged={} after {} iterations; reports in {}",
        output.iteration.converged,
        output.iteration.iterations,
        config.out_dir.display()
    );
    if !output.iteration.converged {
        anyhow::bail!(meanfield::Error::InvalidModel(format!(
            "damped iteration did not converge within {} iterations",
            config.fixed_point.max_iters
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are not errors.
            if err.use_stderr() {
                eprint!("{err}");
                return ExitCode::from(1);
            }
            print!("{err}");
            return ExitCode::SUCCESS;
        }
    };
    let result = match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Benchmark(args) => cmd_benchmark(args),
        Command::Compare { train_dir, bench_dir, out, occupancy_threshold } => {
            cmd_compare(train_dir, bench_dir, out.clone(), *occupancy_threshold)
        }
        Command::FixedPoint(args) => cmd_fixed_point(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
