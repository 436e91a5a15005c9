//! End-to-end checks of the command-line interface: exit codes, validation
//! messages and file contracts.

use std::path::Path;
use std::process::{Command, Output};

fn mfql(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfql"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn missing_problem_names_the_field_and_exits_one() {
    let out = mfql(&["train", "--regime", "mfg"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("problem"), "stderr: {}", stderr(&out));
}

#[test]
fn unknown_flag_exits_one() {
    let out = mfql(&["train", "--problem", "hara", "--regime", "mfg", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_config_file_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.toml");
    std::fs::write(&path, "problme = \"hara\"\n").unwrap();
    let out = mfql(&["train", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn oversized_enumeration_benchmark_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = mfql(&[
        "benchmark",
        "--problem",
        "hara",
        "--regime",
        "mfc",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("policy space too large"), "stderr: {}", stderr(&out));
}

#[test]
fn unconverged_fixed_point_writes_flag_and_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    std::fs::write(
        &config,
        "problem = \"trader\"\nregime = \"mfg\"\n[fixed_point]\nmax_iters = 1\n",
    )
    .unwrap();
    let out = mfql(&[
        "fixed-point",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("fp").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let summary = std::fs::read_to_string(dir.path().join("fp/summary.toml")).unwrap();
    assert!(summary.contains("converged = false"), "summary: {summary}");
    assert!(dir.path().join("fp/residuals.csv").exists());
}

#[test]
fn zero_episode_training_writes_tie_break_policy() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("train");
    let out = mfql(&[
        "train",
        "--problem",
        "hara",
        "--regime",
        "mfg",
        "--episodes",
        "0",
        "--runs",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    // A zero Q table breaks ties toward the lowest admissible action, which
    // for the accumulation problem is investing nothing everywhere.
    let mut reader = csv::Reader::from_path(out_dir.join("controls_0.csv")).unwrap();
    for record in reader.records() {
        let record = record.unwrap();
        assert_eq!(&record[2], "0");
    }
}

#[test]
fn compare_pipeline_and_grid_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let train_dir = dir.path().join("train");
    let bench_dir = dir.path().join("bench");
    let other_bench = dir.path().join("bench-other");
    for (cmd, extra, target) in [
        ("train", Some(("--episodes", "200")), &train_dir),
        ("benchmark", None, &bench_dir),
    ] {
        let mut args = vec![cmd, "--problem", "trader", "--regime", "mfg"];
        if let Some((k, v)) = extra {
            args.push(k);
            args.push(v);
            args.push("--runs");
            args.push("2");
        }
        args.push("--out");
        args.push(target.to_str().unwrap());
        let out = mfql(&args);
        assert!(out.status.success(), "stderr: {}", stderr(&out));
    }
    // Matching grids: comparison succeeds and writes its report.
    let out = mfql(&[
        "compare",
        train_dir.to_str().unwrap(),
        bench_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(train_dir.join("comparison.csv").exists());

    // A benchmark on different grids is rejected with both grids named.
    let out = mfql(&[
        "benchmark",
        "--problem",
        "trader",
        "--regime",
        "mfc",
        "--out",
        other_bench.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let out = mfql(&[
        "compare",
        train_dir.to_str().unwrap(),
        other_bench.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("grids differ"), "stderr: {}", stderr(&out));
}

#[test]
fn comparison_of_identical_tables_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let train_dir = dir.path().join("train");
    let bench_dir = dir.path().join("bench");
    run_ok(&[
        "train",
        "--problem",
        "hara",
        "--regime",
        "mfg",
        "--episodes",
        "100",
        "--runs",
        "1",
        "--out",
        train_dir.to_str().unwrap(),
    ]);
    run_ok(&[
        "benchmark",
        "--problem",
        "hara",
        "--regime",
        "mfg",
        "--out",
        bench_dir.to_str().unwrap(),
    ]);
    // Overwrite the learned column with the benchmark column so the two
    // tables agree exactly, then metrics must be identically zero.
    forge_identical(&train_dir, &bench_dir);
    let out = mfql(&[
        "compare",
        train_dir.to_str().unwrap(),
        bench_dir.to_str().unwrap(),
        "--occupancy-threshold",
        "0",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let report = std::fs::read_to_string(train_dir.join("comparison.csv")).unwrap();
    for line in report.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[2], "0", "linf nonzero in {line}");
        assert_eq!(fields[3], "0", "l1 nonzero in {line}");
    }
}

fn run_ok(args: &[&str]) {
    let out = mfql(args);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
}

/// Rewrites `controls_avg.csv` so learned equals benchmark, and aligns the
/// final mean-field rows with the benchmark means.
fn forge_identical(train_dir: &Path, bench_dir: &Path) {
    let bench = std::fs::read_to_string(bench_dir.join("controls.csv")).unwrap();
    let bench_rows: Vec<Vec<String>> = bench
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect();
    let learned = std::fs::read_to_string(train_dir.join("controls_avg.csv")).unwrap();
    let mut out = String::from("n,x,learned_action,benchmark_action\n");
    for (row, line) in learned.lines().skip(1).enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        out.push_str(&format!(
            "{},{},{},{}\n",
            fields[0], fields[1], bench_rows[row][2], bench_rows[row][2]
        ));
    }
    std::fs::write(train_dir.join("controls_avg.csv"), out).unwrap();

    let bench_means = std::fs::read_to_string(bench_dir.join("meanfield.csv")).unwrap();
    let means: Vec<String> = bench_means
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().to_owned())
        .collect();
    let mf = std::fs::read_to_string(train_dir.join("meanfield_avg.csv")).unwrap();
    let mut out = String::from("episode,n,mean_action\n");
    for line in mf.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let n: usize = fields[1].parse().unwrap();
        out.push_str(&format!("{},{},{}\n", fields[0], fields[1], means[n]));
    }
    std::fs::write(train_dir.join("meanfield_avg.csv"), out).unwrap();
}
