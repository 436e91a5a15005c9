//! CSV output and input. Every file is a plain plot-ready table; float
//! formatting goes through the CSV writer's shortest-roundtrip encoder, so
//! identical data always produces identical bytes.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use crate::config::ExperimentConfig;
use crate::experiment::{BenchmarkTables, FixedPointOutput, ProblemEnv, TrainingOutput};
use meanfield::env::MeanFieldEnvironment;

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path)
        .with_context(|| format!("cannot create output file {}", path.display()))
}

// Shortest-roundtrip float formatting; NaN marks an unavailable value and
// becomes an empty field.
fn fmt(value: f64) -> String {
    if value.is_nan() {
        String::new()
    } else {
        format!("{value}")
    }
}

/// Writes all training outputs (per-run and averaged CSVs plus the
/// manifest) into the configured output directory.
pub fn write_training_reports(
    env: &ProblemEnv,
    config: &ExperimentConfig,
    output: &TrainingOutput,
    benchmark: Option<&BenchmarkTables>,
) -> Result<()> {
    let dir = &config.out_dir;
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;

    let states: Vec<f64> = env.states().values().collect();
    let n_points = env.time_grid().n_points();

    for (index, run) in output.runs.iter().enumerate() {
        let mut controls = writer(&dir.join(format!("controls_{index}.csv")))?;
        controls.write_record(["n", "x", "learned_action", "benchmark_action"])?;
        for n in 0..n_points {
            for (xi, &x) in states.iter().enumerate() {
                let bench = benchmark
                    .map(|b| fmt(b.control[n][xi]))
                    .unwrap_or_default();
                controls.write_record([
                    n.to_string(),
                    fmt(x),
                    fmt(run.controls[n][xi]),
                    bench,
                ])?;
            }
        }
        controls.flush()?;

        let mut occupancy = writer(&dir.join(format!("occupancy_{index}.csv")))?;
        occupancy.write_record(["n", "x", "visits"])?;
        for n in 0..n_points {
            for (xi, &x) in states.iter().enumerate() {
                occupancy.write_record([
                    n.to_string(),
                    fmt(x),
                    run.occupancy[n][xi].to_string(),
                ])?;
            }
        }
        occupancy.flush()?;

        let mut meanfield = writer(&dir.join(format!("meanfield_{index}.csv")))?;
        meanfield.write_record(["episode", "n", "mean_action"])?;
        for row in &run.trace {
            for (n, value) in row.mean_actions.iter().enumerate() {
                meanfield.write_record([
                    row.episode.to_string(),
                    n.to_string(),
                    fmt(*value),
                ])?;
            }
        }
        meanfield.flush()?;

        let mut norms = writer(&dir.join(format!("norms_{index}.csv")))?;
        norms.write_record(["episode", "n", "nu_norm", "q_norm"])?;
        for row in &run.trace {
            for n in 0..row.nu_change.len() {
                norms.write_record([
                    row.episode.to_string(),
                    n.to_string(),
                    fmt(row.nu_change[n]),
                    fmt(row.q_change[n]),
                ])?;
            }
        }
        norms.flush()?;
    }

    let mut controls = writer(&dir.join("controls_avg.csv"))?;
    controls.write_record(["n", "x", "learned_action", "benchmark_action"])?;
    for n in 0..n_points {
        for (xi, &x) in states.iter().enumerate() {
            let bench = benchmark.map(|b| fmt(b.control[n][xi])).unwrap_or_default();
            controls.write_record([
                n.to_string(),
                fmt(x),
                fmt(output.averaged_controls[n][xi]),
                bench,
            ])?;
        }
    }
    controls.flush()?;

    let mut occupancy = writer(&dir.join("occupancy_avg.csv"))?;
    occupancy.write_record(["n", "x", "visits"])?;
    for n in 0..n_points {
        for (xi, &x) in states.iter().enumerate() {
            occupancy.write_record([
                n.to_string(),
                fmt(x),
                fmt(output.averaged_occupancy[n][xi]),
            ])?;
        }
    }
    occupancy.flush()?;

    let mut meanfield = writer(&dir.join("meanfield_avg.csv"))?;
    meanfield.write_record(["episode", "n", "mean_action"])?;
    for (episode, means) in &output.averaged_meanfield {
        for (n, value) in means.iter().enumerate() {
            meanfield.write_record([episode.to_string(), n.to_string(), fmt(*value)])?;
        }
    }
    meanfield.flush()?;

    std::fs::write(dir.join("manifest.toml"), config.manifest_toml())
        .context("cannot write manifest")?;
    Ok(())
}

/// Writes benchmark control/mean tables and the coefficient table.
pub fn write_benchmark_reports(
    config: &ExperimentConfig,
    tables: &BenchmarkTables,
) -> Result<()> {
    let dir = &config.out_dir;
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;

    let mut controls = writer(&dir.join("controls.csv"))?;
    controls.write_record(["t", "x", "control"])?;
    for (n, &t) in tables.times.iter().enumerate() {
        for (xi, &x) in tables.states.iter().enumerate() {
            controls.write_record([fmt(t), fmt(x), fmt(tables.control[n][xi])])?;
        }
    }
    controls.flush()?;

    let mut means = writer(&dir.join("meanfield.csv"))?;
    means.write_record(["t", "mean_control"])?;
    for (n, &t) in tables.times.iter().enumerate() {
        means.write_record([fmt(t), fmt(tables.mean_control[n])])?;
    }
    means.flush()?;

    let mut coefficients = writer(&dir.join("coefficients.csv"))?;
    coefficients.write_record(&tables.coefficient_headers)?;
    for row in &tables.coefficients {
        coefficients.write_record(row.iter().map(|v| fmt(*v)))?;
    }
    coefficients.flush()?;

    std::fs::write(dir.join("manifest.toml"), config.manifest_toml())
        .context("cannot write manifest")?;
    Ok(())
}

/// Writes the residual trace and fixed-point control table, plus a summary
/// with the convergence flag.
pub fn write_fixed_point_reports(
    config: &ExperimentConfig,
    output: &FixedPointOutput,
) -> Result<()> {
    let dir = &config.out_dir;
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;

    let mut residuals = writer(&dir.join("residuals.csv"))?;
    residuals.write_record(["iteration", "q_residual", "nu_residual"])?;
    for sample in &output.iteration.trace {
        residuals.write_record([
            sample.iteration.to_string(),
            fmt(sample.q_residual),
            fmt(sample.nu_residual),
        ])?;
    }
    residuals.flush()?;

    let mut controls = writer(&dir.join("fixed_point_controls.csv"))?;
    controls.write_record(["t", "x", "control"])?;
    for (n, &t) in output.times.iter().enumerate() {
        for (xi, &x) in output.states.iter().enumerate() {
            controls.write_record([fmt(t), fmt(x), fmt(output.controls[n][xi])])?;
        }
    }
    controls.flush()?;

    let last = output.iteration.trace.last();
    let summary = format!(
        "converged = {}\niterations = {}\nfinal_q_residual = {}\nfinal_nu_residual = {}\n",
        output.iteration.converged,
        output.iteration.iterations,
        last.map(|s| fmt(s.q_residual)).unwrap_or_default(),
        last.map(|s| fmt(s.nu_residual)).unwrap_or_default(),
    );
    std::fs::write(dir.join("summary.toml"), summary).context("cannot write summary")?;
    std::fs::write(dir.join("manifest.toml"), config.manifest_toml())
        .context("cannot write manifest")?;
    Ok(())
}

/// A `(n, x) -> value` table read back from a CSV file.
pub struct GridTable {
    /// Distinct time keys in file order.
    pub time_keys: Vec<String>,
    /// Distinct state values in file order.
    pub states: Vec<f64>,
    /// `values[time][state]`.
    pub values: Vec<Vec<f64>>,
    /// Optional second value column (benchmark action), when present.
    pub second: Option<Vec<Vec<f64>>>,
}

/// Reads a long-format CSV with columns `(time, x, value [, value2])` into a
/// grid table. Works for both index-keyed (`n`) and time-keyed (`t`) files.
pub fn read_grid_table(path: &Path) -> Result<GridTable> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let has_second = headers.len() >= 4;
    let mut time_keys: Vec<String> = Vec::new();
    let mut states: Vec<f64> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    let mut second: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let t = record[0].to_string();
        let x: f64 = record[1].parse().context("bad state value")?;
        let v: f64 = if record[2].is_empty() {
            f64::NAN
        } else {
            record[2].parse().context("bad value")?
        };
        if time_keys.last() != Some(&t) {
            time_keys.push(t);
            values.push(Vec::new());
            second.push(Vec::new());
        }
        let row = values.last_mut().expect("pushed above");
        row.push(v);
        if has_second {
            let s: f64 = if record[3].is_empty() {
                f64::NAN
            } else {
                record[3].parse().context("bad value")?
            };
            second.last_mut().expect("pushed above").push(s);
        }
        if time_keys.len() == 1 {
            states.push(x);
        }
    }
    Ok(GridTable {
        time_keys,
        states,
        values,
        second: if has_second { Some(second) } else { None },
    })
}

/// Reads a `(time, value)` CSV into parallel vectors.
pub fn read_series(path: &Path) -> Result<(Vec<String>, Vec<f64>)> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let mut keys = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record?;
        keys.push(record[0].to_string());
        values.push(record[1].parse().context("bad value")?);
    }
    Ok((keys, values))
}

/// Per-time-slice comparison metrics between learned and benchmark tables.
pub struct ComparisonRow {
    pub n: usize,
    pub states_compared: usize,
    /// `max |learned − benchmark| / Δa` over qualifying states.
    pub linf_grid_steps: f64,
    /// `Σ |learned − benchmark| / Δa` over qualifying states.
    pub l1_grid_steps: f64,
    /// `|E[α]^learned − E[α]^benchmark|` at the final traced episode.
    pub mean_action_abs_error: f64,
}

/// Compares a training output directory against a benchmark directory:
/// control distances in action-grid-step units over states whose average
/// occupancy clears the threshold, plus final mean-control errors.
pub fn compare_directories(
    train_dir: &Path,
    bench_dir: &Path,
    occupancy_threshold: f64,
) -> Result<Vec<ComparisonRow>> {
    let manifest_text = std::fs::read_to_string(train_dir.join("manifest.toml"))
        .context("training directory has no manifest.toml")?;
    let manifest: crate::config::ExperimentConfig =
        toml::from_str(&manifest_text).context("cannot parse training manifest")?;
    let action_step = match manifest.problem {
        crate::config::Problem::Hara => {
            manifest.hara.as_ref().map(|h| h.grid_step).unwrap_or(1.0)
        }
        crate::config::Problem::Trader => {
            manifest.trader.as_ref().map(|t| t.grid_step).unwrap_or(1.0)
        }
    };

    let learned = read_grid_table(&train_dir.join("controls_avg.csv"))?;
    let occupancy = read_grid_table(&train_dir.join("occupancy_avg.csv"))?;
    let bench = read_grid_table(&bench_dir.join("controls.csv"))?;

    if learned.states.len() != bench.states.len()
        || learned
            .states
            .iter()
            .zip(bench.states.iter())
            .any(|(a, b)| (a - b).abs() > 1e-9)
    {
        bail!(
            "state grids differ between training ({:?}) and benchmark ({:?})",
            learned.states,
            bench.states
        );
    }
    if learned.time_keys.len() != bench.time_keys.len() {
        bail!(
            "time grids differ: training has {} points, benchmark {}",
            learned.time_keys.len(),
            bench.time_keys.len()
        );
    }

    // Final-episode learned means per time point.
    let mut learned_means = vec![f64::NAN; learned.time_keys.len()];
    {
        let mut reader = csv::Reader::from_path(train_dir.join("meanfield_avg.csv"))
            .context("cannot open meanfield_avg.csv")?;
        for record in reader.records() {
            let record = record?;
            let n: usize = record[1].parse()?;
            if !record[2].is_empty() {
                learned_means[n] = record[2].parse()?;
            }
        }
    }
    let (_, bench_means) = read_series(&bench_dir.join("meanfield.csv"))?;

    let rows = (0..learned.time_keys.len())
        .map(|n| {
            let mut linf = 0.0f64;
            let mut l1 = 0.0f64;
            let mut count = 0usize;
            for (xi, _) in learned.states.iter().enumerate() {
                if occupancy.values[n][xi] < occupancy_threshold {
                    continue;
                }
                let gap = (learned.values[n][xi] - bench.values[n][xi]).abs() / action_step;
                linf = linf.max(gap);
                l1 += gap;
                count += 1;
            }
            ComparisonRow {
                n,
                states_compared: count,
                linf_grid_steps: linf,
                l1_grid_steps: l1,
                mean_action_abs_error: (learned_means[n] - bench_means[n]).abs(),
            }
        })
        .collect();
    Ok(rows)
}

/// Writes the comparison report produced by [`compare_directories`].
pub fn write_comparison(out_dir: &Path, rows: &[ComparisonRow]) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
    let path = out_dir.join("comparison.csv");
    let mut report = writer(&path)?;
    report.write_record([
        "n",
        "states_compared",
        "linf_grid_steps",
        "l1_grid_steps",
        "mean_action_abs_error",
    ])?;
    for row in rows {
        report.write_record([
            row.n.to_string(),
            row.states_compared.to_string(),
            fmt(row.linf_grid_steps),
            fmt(row.l1_grid_steps),
            fmt(row.mean_action_abs_error),
        ])?;
    }
    report.flush()?;
    Ok(path)
}
