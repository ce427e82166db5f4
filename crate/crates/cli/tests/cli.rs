// SPDX-License-Identifier: MIT OR Apache-2.0

//! End-to-end tests of the `geomseg` binary: exit codes, JSON schema, file
//! outputs, and flag validation.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_geomseg")
}

fn run(args: &[&str]) -> Output {
    Command::new(binary())
        .args(args)
        .env_remove("GEOMSEG_SEED")
        .output()
        .expect("binary runs")
}

fn run_with_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(binary())
        .args(args)
        .env_remove("GEOMSEG_SEED")
        .env(key, value)
        .output()
        .expect("binary runs")
}

fn stdout_json(output: &Output) -> serde_json::Value {
    assert!(
        output.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    serde_json::from_slice(&output.stdout).expect("valid JSON on stdout")
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("no signal")
}

fn stderr_text(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn write_step_csv(dir: &Path) -> PathBuf {
    let path = dir.join("step.csv");
    let mut text = String::from("value\n");
    for t in 0..20 {
        let y = if t < 10 { 0.0 } else { 10.0 };
        text.push_str(&format!("{y}\n"));
    }
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn detect_step_series_agrees_across_solvers() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_step_csv(dir.path());
    let mut reports = Vec::new();
    for pruning in ["op", "pelt", "geom-r", "geom-s"] {
        let out = run(&[
            "detect",
            "--input",
            input.to_str().unwrap(),
            "--beta",
            "5.0",
            "--pruning",
            pruning,
        ]);
        let json = stdout_json(&out);
        assert_eq!(json["schema_version"], 1);
        assert_eq!(json["changepoints"], serde_json::json!([10]));
        assert_eq!(json["segment_count"], 2);
        assert!(json["wall_time"].as_f64().unwrap() >= 0.0);
        reports.push(json);
    }
    let cost = reports[0]["total_cost"].as_f64().unwrap();
    for json in &reports[1..] {
        let other = json["total_cost"].as_f64().unwrap();
        assert!((other - cost).abs() <= 1e-8 * cost.abs().max(1.0));
    }
    assert_eq!(reports[2]["algorithm"], "geom-r-last-random-random");
}

#[test]
fn detect_single_row_costs_exactly_beta() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("one.csv");
    std::fs::write(&input, "5.0\n").unwrap();
    let out = run(&[
        "detect",
        "--input",
        input.to_str().unwrap(),
        "--beta",
        "3.5",
    ]);
    let json = stdout_json(&out);
    assert_eq!(json["changepoints"], serde_json::json!([]));
    assert_eq!(json["segment_count"], 1);
    assert_eq!(json["total_cost"], 3.5);
    assert_eq!(json["beta_used"], 3.5);
    assert_eq!(json["sigma_used"], serde_json::Value::Null);
}

#[test]
fn detect_ball_pruning_rejects_count_models() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("counts.csv");
    std::fs::write(&input, "1\n2\n3\n").unwrap();
    let out = run(&[
        "detect",
        "--input",
        input.to_str().unwrap(),
        "--model",
        "poisson",
        "--pruning",
        "geom-s",
    ]);
    assert_eq!(exit_code(&out), 4);
    assert!(stderr_text(&out).contains("gaussian"));
}

#[test]
fn detect_beta_wins_over_sigma_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_step_csv(dir.path());
    let out = run(&[
        "detect",
        "--input",
        input.to_str().unwrap(),
        "--beta",
        "5.0",
        "--sigma",
        "2.0",
    ]);
    let json = stdout_json(&out);
    assert_eq!(json["beta_used"], 5.0);
    assert_eq!(json["sigma_used"], 2.0);
    assert!(stderr_text(&out).contains("--beta"), "missing warning");
}

#[test]
fn detect_estimates_sigma_when_no_penalty_flags_given() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sim.csv");
    run(&[
        "simulate", "--n", "400", "--p", "2", "--segments", "1", "--seed", "3", "--out",
        data.to_str().unwrap(),
    ]);
    let out = run(&["detect", "--input", data.to_str().unwrap()]);
    let json = stdout_json(&out);
    let sigma = json["sigma_used"].as_f64().unwrap();
    assert!(sigma > 0.5 && sigma < 1.5, "sigma estimate {sigma}");
    assert!(json["beta_used"].as_f64().unwrap() > 0.0);
}

#[test]
fn detect_writes_diagnostics_trace() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_step_csv(dir.path());
    let trace = dir.path().join("diag.csv");
    let out = run(&[
        "detect",
        "--input",
        input.to_str().unwrap(),
        "--beta",
        "5.0",
        "--trace-out",
        trace.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("t,live_candidates,inter_ops,excl_ops\n"));
    assert_eq!(text.lines().count(), 21);
}

#[test]
fn detect_reports_domain_violations_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("neg.csv");
    std::fs::write(&input, "1\n-2\n3\n").unwrap();
    let out = run(&[
        "detect",
        "--input",
        input.to_str().unwrap(),
        "--model",
        "poisson",
    ]);
    assert_eq!(exit_code(&out), 3);
    let err = stderr_text(&out);
    assert!(err.contains("row 2"), "stderr: {err}");
}

#[test]
fn detect_bad_paths_and_malformed_input_exit_2() {
    let out = run(&["detect", "--input", "/nonexistent/zzz.csv"]);
    assert_eq!(exit_code(&out), 2);

    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("ragged.csv");
    std::fs::write(&input, "1,2\n3\n").unwrap();
    let out = run(&["detect", "--input", input.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);

    let step = write_step_csv(dir.path());
    let out = run(&[
        "detect",
        "--input",
        step.to_str().unwrap(),
        "--beta",
        "5.0",
        "--out",
        "/nonexistent-dir/out.json",
    ]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn detect_rejects_invalid_flag_combinations() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_step_csv(dir.path());
    let path = input.to_str().unwrap();
    let negbin_without_phi = run(&["detect", "--input", path, "--model", "negbin"]);
    assert_eq!(exit_code(&negbin_without_phi), 4);
    let phi_on_gaussian = run(&["detect", "--input", path, "--phi", "2.0"]);
    assert_eq!(exit_code(&phi_on_gaussian), 4);
    let unknown_pruning = run(&["detect", "--input", path, "--pruning", "fpop"]);
    assert_eq!(exit_code(&unknown_pruning), 4);
}

#[test]
fn simulate_is_deterministic_and_writes_truth() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let res = run(&[
            "simulate", "--n", "100", "--p", "2", "--segments", "1", "--seed", "7", "--out",
            out.to_str().unwrap(),
        ]);
        assert!(res.status.success(), "{}", stderr_text(&res));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    // Sidecar path defaults to <stem>.truth.csv and lists no boundaries for
    // one segment.
    let truth = std::fs::read_to_string(dir.path().join("a.truth.csv")).unwrap();
    assert_eq!(truth, "changepoint\n");

    let c = dir.path().join("c.csv");
    let res = run(&[
        "simulate", "--n", "100", "--p", "1", "--segments", "5", "--seed", "1", "--out",
        c.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let truth = std::fs::read_to_string(dir.path().join("c.truth.csv")).unwrap();
    assert_eq!(truth, "changepoint\n20\n40\n60\n80\n");
}

#[test]
fn simulate_poisson_emits_nonnegative_integers() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("pois.csv");
    let res = run(&[
        "simulate", "--n", "200", "--p", "2", "--segments", "2", "--model", "poisson", "--seed",
        "9", "--out", out_path.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let text = std::fs::read_to_string(&out_path).unwrap();
    for line in text.lines().skip(1) {
        for field in line.split(',') {
            let value: i64 = field.parse().expect("integer field");
            assert!(value >= 0);
        }
    }
}

#[test]
fn seed_env_variable_is_the_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let flagged = dir.path().join("flagged.csv");
    run(&[
        "simulate", "--n", "50", "--p", "1", "--segments", "1", "--seed", "42", "--out",
        flagged.to_str().unwrap(),
    ]);
    let env_seeded = dir.path().join("env.csv");
    run_with_env(
        &[
            "simulate", "--n", "50", "--p", "1", "--segments", "1", "--out",
            env_seeded.to_str().unwrap(),
        ],
        "GEOMSEG_SEED",
        "42",
    );
    assert_eq!(
        std::fs::read(&flagged).unwrap(),
        std::fs::read(&env_seeded).unwrap()
    );
    let bad = run_with_env(
        &[
            "simulate", "--n", "50", "--p", "1", "--segments", "1", "--out",
            dir.path().join("bad.csv").to_str().unwrap(),
        ],
        "GEOMSEG_SEED",
        "not-a-number",
    );
    assert_eq!(exit_code(&bad), 4);
}

#[test]
fn simulate_round_trips_into_detection() {
    // High-contrast specs: detection with the derived default penalty must
    // recover the true boundaries within +-2 on at least 95% of seeds.
    let dir = tempfile::tempdir().unwrap();
    let mut hits = 0;
    let total = 10;
    for seed in 0..total {
        let data = dir.path().join(format!("rt{seed}.csv"));
        let res = run(&[
            "simulate", "--n", "250", "--p", "2", "--segments", "5", "--amplitude", "5",
            "--seed", &format!("{}", 100 + seed), "--out", data.to_str().unwrap(),
        ]);
        assert!(res.status.success());
        let out = run(&["detect", "--input", data.to_str().unwrap()]);
        let json = stdout_json(&out);
        let found: Vec<i64> = json["changepoints"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_i64().unwrap())
            .collect();
        let truth = [50i64, 100, 150, 200];
        let ok = found.len() == truth.len()
            && found.iter().zip(&truth).all(|(f, t)| (f - t).abs() <= 2);
        if ok {
            hits += 1;
        }
    }
    assert!(hits * 100 >= total * 95, "recovered {hits}/{total}");
}

fn read_trace(path: &Path) -> Vec<(usize, f64)> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            (fields[2].parse().unwrap(), fields[3].parse().unwrap())
        })
        .collect()
}

#[test]
fn trace_writes_dominating_tables_per_config() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("traces");
    let res = run(&[
        "trace",
        "--n",
        "400",
        "--p-list",
        "2",
        "--configs",
        "pelt,geom-r",
        "--replicates",
        "2",
        "--seed",
        "5",
        "--jobs",
        "2",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", stderr_text(&res));
    let pelt = read_trace(&out_dir.join("trace_2_pelt.csv"));
    let geom = read_trace(&out_dir.join("trace_2_geom-r-last-random-random.csv"));
    assert_eq!(pelt.len(), geom.len());
    assert!(!pelt.is_empty());
    for ((t_a, pct_pelt), (t_b, pct_geom)) in pelt.iter().zip(&geom) {
        assert_eq!(t_a, t_b);
        assert!(pct_geom <= pct_pelt, "geom {pct_geom} > pelt {pct_pelt} at t={t_a}");
    }
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("trace_summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["cells"].as_array().unwrap().len(), 2);

    let empty = run(&[
        "trace",
        "--p-list",
        "",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&empty), 4);
}

#[test]
fn bench_censors_slow_cells_and_still_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("bench");
    let res = run(&[
        "bench",
        "--n-list",
        "30000",
        "--p-list",
        "2",
        "--configs",
        "pelt",
        "--replicates",
        "3",
        "--time-cap",
        "0.01",
        "--seed",
        "1",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", stderr_text(&res));
    let table = std::fs::read_to_string(out_dir.join("runtime_2_pelt.csv")).unwrap();
    assert!(table.contains("true"), "no censored row in: {table}");
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("runtime_summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["cells"][0]["censored"], 1);
}

#[test]
fn bench_runs_a_tiny_grid_and_a_segments_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let grid_dir = dir.path().join("grid");
    let res = run(&[
        "bench",
        "--n-list",
        "256,512",
        "--p-list",
        "1",
        "--configs",
        "pelt,geom-r",
        "--replicates",
        "3",
        "--seed",
        "2",
        "--out-dir",
        grid_dir.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", stderr_text(&res));
    for file in ["runtime_1_pelt.csv", "runtime_1_geom-r-last-random-random.csv"] {
        let text = std::fs::read_to_string(grid_dir.join(file)).unwrap();
        // Header plus 2 lengths x 3 replicates.
        assert_eq!(text.lines().count(), 7, "{file}: {text}");
    }

    let sweep_dir = dir.path().join("sweep");
    let res = run(&[
        "bench",
        "--n-list",
        "2000",
        "--segments-list",
        "2,10",
        "--p-list",
        "2",
        "--configs",
        "geom-r",
        "--replicates",
        "3",
        "--seed",
        "2",
        "--jobs",
        "2",
        "--out-dir",
        sweep_dir.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", stderr_text(&res));
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(sweep_dir.join("segments_summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["experiment"], "segments");
    assert_eq!(summary["cells"].as_array().unwrap().len(), 2);

    let two_lengths = run(&[
        "bench",
        "--n-list",
        "100,200",
        "--segments-list",
        "2",
        "--p-list",
        "2",
        "--out-dir",
        sweep_dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&two_lengths), 4);
}
