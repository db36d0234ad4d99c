//! End-to-end CLI behavior: report contents, exit codes, atomic
//! outputs, and seed handling.

mod common;

use std::path::Path;

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn no_tmp_leftovers(dir: &Path) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let name = entry.unwrap().file_name();
        assert!(
            !name.to_string_lossy().ends_with(".tmp"),
            "leftover temp file {name:?}"
        );
    }
}

const LATTICE_CFG: &str = r#"
[system]
kind = "lattice"
dims = "1d"
n = 6
c1 = 1.0
c2 = 1.0
beta = 1.0
j0 = 1.0
h = 0.0

[decomposition]
m = 3

[scheme]
kind = "lie"

[run]
dt = 0.1
t_end = 50.0
burn_in = 5.0
seed = 11
"#;

#[test]
fn analyze_chain_report_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::write_config(dir.path(), "c.toml", &common::bench3_config("lie", "seed = 42"));
    let out = common::run_splitmc(
        &["analyze-chain", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()],
        &[],
    );
    assert!(out.status.success());
    assert_eq!(out.status.code(), Some(0));
    let v = read_json(&dir.path().join("analyze.json"));
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["seed"], 42);
    assert_eq!(v["n_states"], 3);
    assert_eq!(v["config"]["run"]["dt"], 0.1);
    assert_eq!(v["predicted_order"], 1);
    assert_eq!(v["uq"].as_array().unwrap().len(), 3);
    // Stationary vectors are probability distributions.
    let sum: f64 = v["stationary_exact"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .sum();
    assert!((sum - 1.0).abs() < 1e-10);
    no_tmp_leftovers(dir.path());
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::write_config(dir.path(), "c.toml", LATTICE_CFG);
    for (label, seed_args) in
        [("a", vec![]), ("b", vec!["--seed", "99"]), ("c", vec!["--seed", "99"])]
    {
        let out_dir = dir.path().join(label);
        let mut args = vec![
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ];
        args.extend(seed_args);
        let out = common::run_splitmc(&args, &[]);
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    let a = read_json(&dir.path().join("a/simulate.json"));
    let b = read_json(&dir.path().join("b/simulate.json"));
    assert_eq!(a["seed"], 11);
    assert_eq!(b["seed"], 99);
    assert_ne!(a["coefficient_estimate"], b["coefficient_estimate"]);
    // Same seed twice is byte-identical.
    let b_bytes = std::fs::read(dir.path().join("b/simulate.json")).unwrap();
    let c_bytes = std::fs::read(dir.path().join("c/simulate.json")).unwrap();
    assert_eq!(b_bytes, c_bytes);
}

#[test]
fn simulate_outputs_and_events() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_text = LATTICE_CFG.replace("t_end = 50.0", "t_end = 20.0")
        + "emit_events = true\n";
    let cfg = common::write_config(dir.path(), "c.toml", &cfg_text);
    let out = common::run_splitmc(
        &["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()],
        &[],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&dir.path().join("simulate.json"));
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["steps"], 200);
    assert_eq!(v["sampled_steps"], 150);
    assert_eq!(v["sync_events"], 200);
    let cov = v["mean_coverage"].as_f64().unwrap();
    assert!(cov > 0.0 && cov < 1.0);

    let csv = std::fs::read_to_string(dir.path().join("observables.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "step,time,coverage");
    assert_eq!(lines.count(), 150);

    let events = std::fs::read_to_string(dir.path().join("events.csv")).unwrap();
    assert!(events.starts_with("step,sublattice,site,new_spin,time"));
    assert!(events.lines().count() > 1, "no events recorded");

    let timing = read_json(&dir.path().join("timing.json"));
    assert!(timing["wall_seconds"].as_f64().unwrap() > 0.0);
    no_tmp_leftovers(dir.path());
}

#[test]
fn sweep_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::write_config(dir.path(), "c.toml", &common::bench3_config("lie", ""));
    let out = common::run_splitmc(
        &["sweep", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()],
        &[],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "scheme,dt,pp_rer,stderr,fitted_slope,fitted_coeff,dt_for_tolerance"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 14, "7 grid points x 2 schemes");
    assert_eq!(rows.iter().filter(|r| r.starts_with("lie,")).count(), 7);
    assert_eq!(rows.iter().filter(|r| r.starts_with("strang,")).count(), 7);

    let v = read_json(&dir.path().join("sweep.json"));
    let lie_dt = v["lie_fit"]["dt_for_tolerance"].as_f64().unwrap();
    let strang_dt = v["strang_fit"]["dt_for_tolerance"].as_f64().unwrap();
    // A third-order scheme tolerates a much larger step at the same
    // information-loss budget.
    assert!(strang_dt > 10.0 * lie_dt, "strang {strang_dt} vs lie {lie_dt}");
    no_tmp_leftovers(dir.path());
}

#[test]
fn compare_report_consistency() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::write_config(dir.path(), "c.toml", &common::bench3_config("lie", ""));
    let out = common::run_splitmc(
        &["compare", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()],
        &[],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&dir.path().join("compare.json"));
    let a1 = v["a1"].as_f64().unwrap();
    let a2 = v["a2"].as_f64().unwrap();
    assert_eq!(v["p1"], 1);
    assert_eq!(v["p2"], 3);
    assert!(a1 > 0.0 && a2 > 0.0);
    // Criterion rows are A1 dt^p1 - A2 dt^p2 on the grid.
    for row in v["criterion"].as_array().unwrap() {
        let dt = row[0].as_f64().unwrap();
        let val = row[1].as_f64().unwrap();
        let expect = a1 * dt - a2 * dt.powi(3);
        assert!((val - expect).abs() < 1e-12);
    }
    let cross = v["crossover_dt"].as_f64().unwrap();
    assert!((cross - (a1 / a2).sqrt()).abs() < 1e-12);
    assert!(v["comm_bound_scheme1"].is_null());

    // Lattice configs also report the per-step communication bounds.
    let cfg2 = common::write_config(dir.path(), "lat.toml", LATTICE_CFG);
    let out_dir = dir.path().join("lat");
    let out = common::run_splitmc(
        &["compare", "--config", cfg2.to_str().unwrap(), "--out", out_dir.to_str().unwrap()],
        &[],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&out_dir.join("compare.json"));
    let b1 = v["comm_bound_scheme1"].as_f64().unwrap();
    let b2 = v["comm_bound_scheme2"].as_f64().unwrap();
    assert!((b1 - 2.0 * 4.0 / 6.0).abs() < 1e-12);
    assert!((b2 - 3.0 * b1).abs() < 1e-12);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    // Missing config file -> configuration error (3).
    let out = common::run_splitmc(
        &["analyze-chain", "--config", "/nonexistent.toml", "--out", dir.path().to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(3));

    // Invalid dt -> configuration error (3).
    let bad = common::write_config(
        dir.path(),
        "bad_dt.toml",
        &common::bench3_config("lie", "").replace("dt = 0.1", "dt = 1.5"),
    );
    let out = common::run_splitmc(
        &["analyze-chain", "--config", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(3));

    // Indivisible decomposition -> validation error (3).
    let bad_m = common::write_config(
        dir.path(),
        "bad_m.toml",
        &LATTICE_CFG.replace("m = 3", "m = 4"),
    );
    let out = common::run_splitmc(
        &["simulate", "--config", bad_m.to_str().unwrap(), "--out", dir.path().to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(3));

    // Degenerate (all-zero) generator: the scheme chain is reducible,
    // so analysis fails at runtime (2).
    let reducible = common::write_config(
        dir.path(),
        "reducible.toml",
        r#"
[system]
kind = "dense"
rates = [[0.0, 0.0], [0.0, 0.0]]
split_pairs = [[0, 1]]

[scheme]
kind = "lie"
"#,
    );
    let out = common::run_splitmc(
        &["analyze-chain", "--config", reducible.to_str().unwrap(), "--out", dir.path().to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}
