//! End-to-end tests of the `dbcs` binary: flag handling, file outputs,
//! exit codes, and determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dbcs"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dbcs-cli-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(path: &Path, contents: &str) {
    std::fs::write(path, contents).unwrap();
}

fn small_config() -> &'static str {
    "mode = simulate\n\
     dgp = bernoulli\n\
     mu = 0.2,0.5\n\
     policy = mean-proportional\n\
     horizon = 60\n\
     explore_fraction = 0.2\n\
     p_floor = 0.2\n\
     mean_floor = 0.05\n\
     methods = ci,asymp-cs,exact-cs\n\
     estimand = contrast:1,0\n\
     alpha = 0.05\n\
     m = 5.0\n\
     reps = 8\n\
     seed = 17\n"
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed ({:?}): {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn tune_eta_prints_rounded_and_full_precision() {
    let out = run_ok(bin().args(["--mode", "tune-eta", "--alpha", "0.05"]));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("eta = 0.77"), "stdout: {stdout}");
    assert!(stdout.contains("eta_full = 0.7698618731507461"), "stdout: {stdout}");
}

#[test]
fn bad_alpha_is_a_config_error() {
    // The tuner is only defined for alpha <= 1/e.
    let out = bin()
        .args(["--mode", "tune-eta", "--alpha", "0.6"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_mode_is_a_config_error() {
    let dir = temp_dir("badmode");
    let cfg = dir.join("run.cfg");
    write(&cfg, "mode = frobnicate\n");
    let out = bin().arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_writes_pinned_report_columns_and_is_deterministic() {
    let dir = temp_dir("sim");
    let cfg = dir.join("run.cfg");
    write(&cfg, small_config());

    for sub in ["a", "b"] {
        run_ok(
            bin()
                .arg("--config")
                .arg(&cfg)
                .arg("--out")
                .arg(dir.join(sub)),
        );
    }
    let a = std::fs::read(dir.join("a/report.csv")).unwrap();
    let b = std::fs::read(dir.join("b/report.csv")).unwrap();
    assert_eq!(a, b, "same seed must give byte-identical reports");

    let text = String::from_utf8(a).unwrap();
    let header = text
        .lines()
        .find(|l| !l.starts_with('#'))
        .expect("report has a column header");
    assert_eq!(
        header,
        "method,estimand,coverage,coverage_se,mean_width,stop_mean,stop_censored,power,n_reps"
    );
    assert!(text.lines().any(|l| l.starts_with("# seed = 17")));
    assert!(text.lines().any(|l| l.starts_with("# master_seed = 17")));

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("a/report.json")).unwrap())
            .unwrap();
    assert_eq!(json["master_seed"], 17);
    assert_eq!(json["config"]["mu"], "0.2,0.5");
    assert_eq!(json["report"]["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn report_is_invariant_to_worker_count() {
    let dir = temp_dir("threads");
    let cfg = dir.join("run.cfg");
    write(&cfg, small_config());
    for (sub, threads) in [("t1", "1"), ("t3", "3")] {
        run_ok(
            bin()
                .arg("--config")
                .arg(&cfg)
                .arg("--out")
                .arg(dir.join(sub))
                .env("DBCS_THREADS", threads),
        );
    }
    assert_eq!(
        std::fs::read(dir.join("t1/report.csv")).unwrap(),
        std::fs::read(dir.join("t3/report.csv")).unwrap()
    );
}

/// Simulate emits the replication-0 log and its bound series; analyzing
/// that log must reproduce the identical series.
#[test]
fn analyze_matches_simulated_bound_series() {
    let dir = temp_dir("roundtrip");
    let cfg = dir.join("run.cfg");
    write(&cfg, &format!("{}emit_bounds = true\n", small_config()));

    let sim_out = dir.join("sim");
    let log = dir.join("traj.jsonl");
    run_ok(
        bin()
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&sim_out)
            .arg("--log")
            .arg(&log),
    );
    let an_out = dir.join("an");
    run_ok(
        bin()
            .args(["--mode", "analyze"])
            .arg("--config")
            .arg(&cfg)
            .arg("--log")
            .arg(&log)
            .arg("--out")
            .arg(&an_out),
    );

    for name in [
        "bounds_ci_contrast_1_0.csv",
        "bounds_asymp-cs_contrast_1_0.csv",
        "bounds_exact-cs_contrast_1_0.csv",
    ] {
        let sim_rows = data_rows(&sim_out.join(name));
        let an_rows = data_rows(&an_out.join(name));
        assert_eq!(sim_rows.len(), 60, "{name}: one row per round");
        assert_eq!(sim_rows, an_rows, "{name}: analyze must reproduce simulate");
    }
}

fn data_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()))
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("t,"))
        .map(str::to_string)
        .collect()
}

#[test]
fn analyze_rejects_invalid_propensities_citing_the_line() {
    let dir = temp_dir("badlog");
    let log = dir.join("bad.jsonl");
    write(
        &log,
        "{\"K\":2}\n\
         {\"t\":1,\"p\":[0.5,0.5],\"a\":0,\"y\":1.0}\n\
         {\"t\":2,\"p\":[0.0,1.0],\"a\":1,\"y\":0.0}\n",
    );
    let out = bin()
        .args(["--mode", "analyze"])
        .arg("--log")
        .arg(&log)
        .arg("--out")
        .arg(dir.join("an"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 3"), "stderr should cite line 3: {stderr}");
}

#[test]
fn analyze_rejects_missing_fields_citing_the_line() {
    let dir = temp_dir("schemalog");
    let log = dir.join("bad.jsonl");
    write(
        &log,
        "{\"K\":2}\n\
         {\"t\":1,\"p\":[0.5,0.5],\"y\":1.0}\n",
    );
    let out = bin()
        .args(["--mode", "analyze"])
        .arg("--log")
        .arg(&log)
        .arg("--out")
        .arg(dir.join("an"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "stderr should cite line 2: {stderr}");
    assert!(stderr.contains('a'), "stderr should name the missing field: {stderr}");
}

#[test]
fn rho_sweep_writes_grid_csv() {
    let dir = temp_dir("sweep");
    let cfg = dir.join("run.cfg");
    write(
        &cfg,
        "mode = rho-sweep\n\
         dgp = ar1\n\
         rho_ar = 0.0\n\
         beta = 0.0\n\
         mu = 1.0,1.5\n\
         policy = mean-proportional\n\
         horizon = 40\n\
         p_floor = 0.05\n\
         methods = ci\n\
         estimand = arm:0\n\
         rho_grid = 0,0.5\n\
         reps = 5\n\
         seed = 3\n",
    );
    run_ok(bin().arg("--config").arg(&cfg).arg("--out").arg(dir.join("out")));
    let text = std::fs::read_to_string(dir.join("out/rho_sweep.csv")).unwrap();
    let data: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("rho,"))
        .collect();
    assert_eq!(data.len(), 2);
    assert!(data[0].starts_with("0.0,") || data[0].starts_with("0,"));
    assert!(data[1].starts_with("0.5,"));
}
