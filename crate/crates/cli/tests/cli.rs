use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::Value;
use tempfile::TempDir;

use pmoe::simulation::{generate_raw, Scenario};
use pmoe_cli::table::{read_dataset, write_dataset, ColumnRoles};

fn pmoe(args: &[&str]) -> Output {
    pmoe_with_env(args, &[])
}

fn pmoe_with_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pmoe"));
    cmd.args(args).env_remove("PMOE_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("failed to launch the pmoe binary")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "exit {:?}\nstderr: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_file(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p
}

fn scenario_csv(dir: &TempDir, name: &str, n: usize, seed: u64) -> PathBuf {
    let p = dir.path().join(format!("{name}_{seed}.csv"));
    let n = n.to_string();
    let seed = seed.to_string();
    ok(&pmoe(&["generate", name, "--n", &n, "--seed", &seed, "--out", path_str(&p)]));
    p
}

/// 88 units, 35 correlated covariates, a treatment obtained by splitting a
/// continuous covariate-driven index at its median, and a modest effect.
fn growth_like_csv(dir: &TempDir) -> PathBuf {
    let (n, r) = (88, 35);
    let mut rng = ChaCha8Rng::seed_from_u64(1988);
    let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let common = z();
        let x: Vec<f64> = (0..r).map(|_| 0.6 * common + 0.8 * z()).collect();
        let index = 0.9 * x[0] + 0.6 * x[1] - 0.5 * x[4] + 0.7 * z();
        rows.push((x, index, z()));
    }
    let mut sorted: Vec<f64> = rows.iter().map(|r| r.1).collect();
    sorted.sort_by(f64::total_cmp);
    let median = 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);

    let mut body = String::from("growth,life_high");
    for j in 1..=r {
        body.push_str(&format!(",x{j}"));
    }
    body.push('\n');
    for (x, index, noise) in rows {
        let d = u8::from(index > median);
        let y = 1.0 + 0.5 * f64::from(d) + 0.8 * x[0] - 0.6 * x[2] + 0.4 * x[4] + 0.5 * noise;
        body.push_str(&format!("{y:?},{d}"));
        for v in x {
            body.push_str(&format!(",{v:?}"));
        }
        body.push('\n');
    }
    write_file(dir, "growth.csv", &body)
}

#[test]
fn non_binary_treatment_is_a_validation_error_naming_the_value() {
    let dir = TempDir::new().unwrap();
    let p = write_file(&dir, "bad.csv", "y,d,x1,x2\n1.0,0,0.1,0.2\n2.0,2,0.3,0.1\n0.5,1,0.2,0.9\n");
    let out = pmoe(&["select", "--input", path_str(&p), "--outcome", "y", "--treatment", "d"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("'2'"), "{err}");
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn missing_column_and_missing_file_are_validation_errors() {
    let dir = TempDir::new().unwrap();
    let p = write_file(&dir, "ok.csv", "y,d,x1\n1.0,0,0.1\n2.0,1,0.3\n");
    let out = pmoe(&["select", "--input", path_str(&p), "--outcome", "y", "--treatment", "treat"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("treat"));

    let missing = dir.path().join("nope.csv");
    let out = pmoe(&["select", "--input", path_str(&missing), "--outcome", "y", "--treatment", "d"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rank_deficient_covariates_exit_with_the_numerical_code() {
    let dir = TempDir::new().unwrap();
    let src = scenario_csv(&dir, "s1", 200, 5);
    let text = fs::read_to_string(&src).unwrap();
    let mut body = String::new();
    for (i, line) in text.lines().enumerate() {
        let third = line.split(',').nth(2).unwrap();
        let extra = if i == 0 { "x1_copy" } else { third };
        body.push_str(&format!("{line},{extra}\n"));
    }
    let p = write_file(&dir, "dup.csv", &body);
    let out = pmoe(&["select", "--input", path_str(&p), "--outcome", "y", "--treatment", "d", "--orthogonalize", "on"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn unknown_scenario_lists_the_available_names() {
    let out = pmoe(&["simulate", "s9", "--reps", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    for name in pmoe::simulation::BUILTIN_NAMES {
        assert!(err.contains(name), "missing {name} in: {err}");
    }
}

#[test]
fn bootstrap_zero_reports_no_standard_error() {
    let dir = TempDir::new().unwrap();
    let p = scenario_csv(&dir, "s1", 300, 2);
    let out =
        ok(&pmoe(&["estimate", "--input", path_str(&p), "--outcome", "y", "--treatment", "d", "--bootstrap", "0"]));
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert!(v["theta_hat"].as_f64().unwrap().is_finite());
    assert!(v["se"].is_null());
    assert!(v["ci"].is_null());
    assert_eq!(v["B"], 0);
}

#[test]
fn simulate_smoke_run_on_the_wide_scenario() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("sim");
    let start = Instant::now();
    ok(&pmoe(&["simulate", "s2", "--n", "500", "--reps", "10", "--seed", "1", "--out", path_str(&out_dir)]));
    assert!(start.elapsed() < Duration::from_secs(60));

    let table = fs::read_to_string(out_dir.join("table.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 4);
    for label in ["pmoe(tau=0.5)", "yfit", "oracle"] {
        assert!(rows.iter().any(|r| r.contains(label)), "{table}");
    }
    let draws = fs::read_to_string(out_dir.join("draws.csv")).unwrap();
    assert_eq!(draws.lines().count(), 1 + 3 * 10);
    let report: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["reps"], 10);
    assert_eq!(report["scenario_definition"]["r"], 100);
}

#[test]
fn gcv_path_has_one_row_per_lambda_and_zeros_at_the_top() {
    let dir = TempDir::new().unwrap();
    let p = scenario_csv(&dir, "s1", 300, 4);
    let body = ok(&pmoe(&["gcv-path", "--input", path_str(&p), "--outcome", "y", "--treatment", "d"]));
    let lines: Vec<&str> = body.lines().collect();
    assert!(lines[0].starts_with("lambda,gcv,n_selected,alpha_x1"));
    assert_eq!(lines.len(), 1 + pmoe::tuning::DEFAULT_GRID_POINTS);

    let parsed: Vec<Vec<f64>> =
        lines[1..].iter().map(|l| l.split(',').map(|f| f.parse::<f64>().unwrap_or(f64::NAN)).collect()).collect();
    let top = parsed.iter().max_by(|a, b| a[0].total_cmp(&b[0])).unwrap();
    assert_eq!(top[2], 0.0);
    assert!(top[3..].iter().all(|&a| a == 0.0));
    assert!(parsed.iter().any(|row| row[2] > 0.0));
}

#[test]
fn custom_lambda_grid_sets_the_row_count() {
    let dir = TempDir::new().unwrap();
    let p = scenario_csv(&dir, "s1", 200, 6);
    let body = ok(&pmoe(&[
        "gcv-path",
        "--input",
        path_str(&p),
        "--outcome",
        "y",
        "--treatment",
        "d",
        "--lambda-grid",
        "0.1,1,10",
    ]));
    assert_eq!(body.lines().count(), 4);
}

const SWEEP_TAUS: &str = "0.1,0.5,1,2,5,10,20";

/// Per-coordinate max minus min of the coefficient traces over the τ sweep.
fn sweep_ranges(dir: &TempDir, input: &Path, lambda: f64) -> Vec<f64> {
    let sweep = dir.path().join(format!("sweep_{lambda}.csv"));
    let lambda = lambda.to_string();
    ok(&pmoe(&[
        "gcv-path",
        "--input",
        path_str(input),
        "--outcome",
        "growth",
        "--treatment",
        "life_high",
        "--tau-sweep",
        SWEEP_TAUS,
        "--sweep-lambda",
        &lambda,
        "--sweep-out",
        path_str(&sweep),
        "--out",
        path_str(&dir.path().join("gcv.csv")),
    ]));
    let text = fs::read_to_string(&sweep).unwrap();
    let rows: Vec<Vec<f64>> =
        text.lines().skip(1).map(|l| l.split(',').map(|f| f.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), SWEEP_TAUS.split(',').count());
    assert!(rows.iter().all(|r| r[1].to_string() == lambda));
    (2..rows[0].len())
        .map(|c| {
            let lo = rows.iter().map(|r| r[c]).fold(f64::INFINITY, f64::min);
            let hi = rows.iter().map(|r| r[c]).fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        })
        .collect()
}

#[test]
fn strongly_penalized_coefficients_are_stable_across_tau() {
    let dir = TempDir::new().unwrap();
    let p = growth_like_csv(&dir);
    let sel: Value = serde_json::from_str(&ok(&pmoe(&[
        "select",
        "--input",
        path_str(&p),
        "--outcome",
        "growth",
        "--treatment",
        "life_high",
    ])))
    .unwrap();
    let nu: Vec<f64> =
        sel["diagnostics"]["penalty_weights"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let m = sel["diagnostics"]["n"].as_f64().unwrap() - 1.0;

    let lambda = 0.01;
    let ranges = sweep_ranges(&dir, &p, lambda);
    // The penalty dominates once it reaches half the curvature of the outcome term.
    let strong: Vec<usize> = (0..nu.len()).filter(|&j| lambda * nu[j] >= 0.5 * m).collect();
    assert!(!strong.is_empty());
    for j in strong {
        assert!(ranges[j] <= 0.05, "coordinate {j} (nu = {}) moves by {}", nu[j], ranges[j]);
    }
}

#[test]
fn tau_traces_flatten_as_lambda_grows() {
    let dir = TempDir::new().unwrap();
    let p = growth_like_csv(&dir);
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let spread: Vec<f64> = [0.0, 0.01, 1.0, 10.0].iter().map(|&l| mean(sweep_ranges(&dir, &p, l))).collect();
    assert!(spread.windows(2).all(|w| w[1] <= w[0]), "{spread:?}");
    assert!(spread[3] < spread[0]);
}

#[test]
fn growth_like_estimate_reports_a_confidence_interval() {
    let dir = TempDir::new().unwrap();
    let p = growth_like_csv(&dir);
    let out = ok(&pmoe(&[
        "estimate",
        "--input",
        path_str(&p),
        "--outcome",
        "growth",
        "--treatment",
        "life_high",
        "--bootstrap",
        "200",
        "--seed",
        "3",
    ]));
    let v: Value = serde_json::from_str(&out).unwrap();
    let theta = v["theta_hat"].as_f64().unwrap();
    assert!(theta.is_finite());
    let ci = v["ci"].as_array().unwrap();
    let (lo, hi) = (ci[0].as_f64().unwrap(), ci[1].as_f64().unwrap());
    assert!(lo < theta && theta < hi);
    assert!(v["se"].as_f64().unwrap() > 0.0);
    assert_eq!(v["config"]["orthogonalize_mode"], "auto");
    assert_eq!(v["config"]["pmoe"]["orthogonalize"], true);
}

#[test]
fn csv_round_trip_preserves_values() {
    let dir = TempDir::new().unwrap();
    let scenario = Scenario::builtin("a3s2").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ds = generate_raw(&scenario, 150, &mut rng).unwrap();
    let p = dir.path().join("rt.csv");
    write_dataset(fs::File::create(&p).unwrap(), &ds, "y", "d").unwrap();
    let back = read_dataset(&p, &ColumnRoles { outcome: "y", treatment: "d", covariates: None }).unwrap();
    assert_eq!(back.n(), ds.n());
    assert_eq!(back.column_names(), ds.column_names());
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(1.0);
    assert!(ds.y().iter().zip(back.y().iter()).all(|(&a, &b)| close(a, b)));
    assert!(ds.d().iter().zip(back.d().iter()).all(|(&a, &b)| a == b));
    assert!(ds.x().iter().zip(back.x().iter()).all(|(&a, &b)| close(a, b)));
}

#[test]
fn selection_on_a_wide_draw_keeps_the_confounders() {
    let dir = TempDir::new().unwrap();
    let p = scenario_csv(&dir, "s2", 500, 3);
    let v: Value = serde_json::from_str(&ok(&pmoe(&[
        "select",
        "--input",
        path_str(&p),
        "--outcome",
        "y",
        "--treatment",
        "d",
        "--orthogonalize",
        "off",
    ])))
    .unwrap();
    let selected: Vec<&str> = v["selected"].as_array().unwrap().iter().map(|s| s.as_str().unwrap()).collect();
    for name in ["x1", "x2", "x3", "x4"] {
        assert!(selected.contains(&name), "{selected:?}");
    }
    assert!(v["diagnostics"]["kkt_violation"].as_f64().unwrap() < 1e-6);
}

#[test]
fn outputs_are_byte_identical_across_runs_and_thread_counts() {
    let dir = TempDir::new().unwrap();
    let p = scenario_csv(&dir, "s1", 200, 8);
    let est = ["estimate", "--input", path_str(&p), "--outcome", "y", "--treatment", "d", "--bootstrap", "100"];
    let a = ok(&pmoe_with_env(&est, &[("PMOE_THREADS", "1")]));
    let b = ok(&pmoe_with_env(&est, &[("PMOE_THREADS", "4")]));
    assert_eq!(a, b);

    let sim = ["simulate", "s1", "--n", "200", "--reps", "12", "--seed", "9"];
    let a = ok(&pmoe_with_env(&sim, &[("PMOE_THREADS", "1")]));
    let b = ok(&pmoe_with_env(&sim, &[("PMOE_THREADS", "3")]));
    let c = ok(&pmoe(&sim));
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn invalid_thread_count_is_rejected() {
    let out = pmoe_with_env(&["simulate", "s1", "--reps", "1"], &[("PMOE_THREADS", "zero")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scenario_file_matches_the_builtin_it_describes() {
    let dir = TempDir::new().unwrap();
    let json = serde_json::to_string(&Scenario::builtin("s1").unwrap()).unwrap();
    let p = write_file(&dir, "s1.json", &json);
    let args = ["--n", "200", "--reps", "3", "--seed", "4"];
    let from_file = ok(&pmoe(&[&["simulate", "--scenario-file", path_str(&p)], &args[..]].concat()));
    let builtin = ok(&pmoe(&[&["simulate", "s1"], &args[..]].concat()));
    assert_eq!(from_file, builtin);

    let bad = write_file(&dir, "bad.json", "{\"name\": \"x\"}");
    let out = pmoe(&["simulate", "--scenario-file", path_str(&bad), "--reps", "1"]);
    assert_eq!(out.status.code(), Some(2));
}
