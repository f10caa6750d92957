use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn wproj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wproj"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let out = wproj(args);
    assert!(
        out.status.success(),
        "wproj {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is json")
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn ring_files(dir: &Path, k: usize) -> (String, String) {
    let cost = dir.join("cost.csv");
    let out = wproj(&["cost", "--ring", &k.to_string(), "--p", "2", "--out", cost.to_str().unwrap()]);
    assert!(out.status.success());
    let mu = dir.join("mu.json");
    let mut v = vec![0.0; k];
    v[0] = 0.7;
    v[1] = 0.3;
    fs::write(&mu, serde_json::to_string(&v).unwrap()).unwrap();
    (cost.to_str().unwrap().into(), mu.to_str().unwrap().into())
}

#[test]
fn cost_ring_csv_has_header_and_rows() {
    let out = wproj(&["cost", "--ring", "4"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k,k_v,p");
    assert_eq!(lines.len(), 2 + 4);
    assert_eq!(lines[2], "0,1,2,1");
}

#[test]
fn cost_grid_json_roundtrips_through_project() {
    let dir = TempDir::new().unwrap();
    let cost = dir.path().join("grid.json");
    assert!(wproj(&["cost", "--grid", "2x3", "--out", cost.to_str().unwrap()])
        .status
        .success());
    let mu = dir.path().join("mu.csv");
    fs::write(&mu, "1\n0\n0\n0\n0\n0\n").unwrap();
    let v = json(&["project", "--cost", cost.to_str().unwrap(), "--mu", mu.to_str().unwrap(), "--eps", "2"]);
    let nu = floats(&v["nu"]);
    assert_eq!(nu.len(), 6);
    assert!((nu.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn project_exact_and_entropic_agree_for_small_lambda() {
    let dir = TempDir::new().unwrap();
    let (cost, mu) = ring_files(dir.path(), 8);
    let exact = json(&["project", "--cost", &cost, "--mu", &mu, "--eps", "1"]);
    let ent = json(&[
        "project", "--cost", &cost, "--mu", &mu, "--eps", "1", "--lambda", "0.01", "--continuation",
    ]);
    assert_eq!(exact["mechanism"], "wpm-exact");
    assert_eq!(ent["mechanism"], "wpm");
    assert_eq!(ent["report"]["converged"], true);
    let we = exact["wasserstein_p"].as_f64().unwrap();
    let wl = ent["wasserstein_p"].as_f64().unwrap();
    assert!(wl >= we - 1e-9);
    assert!(wl - we < 0.2, "{wl} vs {we}");
}

#[test]
fn project_baselines_write_to_file() {
    let dir = TempDir::new().unwrap();
    let (cost, mu) = ring_files(dir.path(), 6);
    for mech in ["kpm", "expmech"] {
        let out = dir.path().join(format!("{mech}.json"));
        let status = wproj(&[
            "project", "--cost", &cost, "--mu", &mu, "--eps", "1.5", "--mechanism", mech, "--out",
            out.to_str().unwrap(),
        ]);
        assert!(status.status.success());
        let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(v["mechanism"], mech);
        assert_eq!(floats(&v["nu"]).len(), 6);
    }
}

#[test]
fn project_rejects_bad_inputs() {
    let dir = TempDir::new().unwrap();
    let (cost, _) = ring_files(dir.path(), 4);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "[0.5, 0.6, 0, 0]").unwrap();
    assert!(!wproj(&["project", "--cost", &cost, "--mu", bad.to_str().unwrap(), "--eps", "1"]).status.success());
    let short = dir.path().join("short.json");
    fs::write(&short, "[0.5, 0.5]").unwrap();
    assert!(!wproj(&["project", "--cost", &cost, "--mu", short.to_str().unwrap(), "--eps", "1"]).status.success());
    assert!(!wproj(&["project", "--cost", "/nonexistent.csv", "--mu", short.to_str().unwrap(), "--eps", "1"])
        .status
        .success());
    assert!(!wproj(&["project", "--cost", &cost, "--mu", bad.to_str().unwrap(), "--eps=-1"]).status.success());
}

#[test]
fn optimize_m_reports_mass_in_range() {
    let dir = TempDir::new().unwrap();
    let (cost, _) = ring_files(dir.path(), 6);
    let v = json(&["optimize-m", "--cost", &cost, "--eps", "1", "--iters", "100"]);
    let m = floats(&v["m"]);
    let mass: f64 = m.iter().sum();
    let (a, b) = ((-0.5f64).exp(), 0.5f64.exp());
    assert!(mass >= 1.0 / b - 1e-9 && mass <= 1.0 / a + 1e-9, "{mass}");
    assert!(v["regret_bound"].as_f64().unwrap() > 0.0);
    assert_eq!(v["iterations"], 100);
}

#[test]
fn sphere_m_alpha_star_exceeds_one() {
    let v = json(&["sphere-m", "--d", "2", "--p", "1", "--eps", "1"]);
    let a = v["alpha_star"].as_f64().unwrap();
    assert!(a > 1.0 && a <= 0.5f64.exp());
    assert!(v["residual"].as_f64().unwrap().abs() < 1e-9);
}

#[test]
fn audit_passes_for_private_mechanisms() {
    for mech in ["wpm", "wpm-exact", "kpm", "expmech"] {
        let v = json(&["audit", "--mechanism", mech, "--k", "12", "--eps", "1"]);
        assert_eq!(v["pass"], true, "{mech}");
        assert!(v["max_log_ratio"].as_f64().unwrap() <= 1.0 + 1e-9);
    }
    let v = json(&["audit", "--mechanism", "wpm", "--k", "12", "--eps", "1", "--lambda", "0.1"]);
    assert_eq!(v["pass"], true);
}

#[test]
fn unknown_mechanism_is_an_error() {
    let out = wproj(&["audit", "--mechanism", "identity", "--k", "5", "--eps", "1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown mechanism"));
}

#[test]
fn sample_is_seeded() {
    let dir = TempDir::new().unwrap();
    let nu = dir.path().join("nu.json");
    fs::write(&nu, "[0.2, 0.3, 0.5]").unwrap();
    let a = json(&["sample", "--nu", nu.to_str().unwrap(), "--n", "50", "--seed", "3"]);
    let b = json(&["sample", "--nu", nu.to_str().unwrap(), "--n", "50", "--seed", "3"]);
    assert_eq!(a, b);
    assert!(a["samples"].as_array().unwrap().iter().all(|s| s.as_u64().unwrap() < 3));
}

#[test]
fn bench_ring_is_deterministic_and_complete() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = wproj(&[
            "bench", "ring", "--k", "8", "--eps", "1,2", "--lambda", "0,0.1", "--draws", "2", "--seed", "11",
            "--out", out.to_str().unwrap(),
        ]);
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        out
    };
    let a = run("a");
    let b = run("b");
    for f in ["results.json", "convergence.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert!(a.join("timings.csv").exists());
    let v: Value = serde_json::from_slice(&fs::read(a.join("results.json")).unwrap()).unwrap();
    let rows = v["rows"].as_array().unwrap();
    // (wpm x 2 lambdas + wpm-exact + kpm + expmech) x 2 epsilons x 2 draws
    assert_eq!(rows.len(), 5 * 2 * 2);
    assert!(rows.iter().all(|r| r["audit_pass"] == true));
    assert_eq!(v["metadata"]["seed"], 11);
}

#[test]
fn bench_reads_config_file() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("config.json");
    fs::write(
        &config,
        r#"{"space": {"kind": "ring", "k": 6}, "epsilons": [2], "lambdas": [0], "mechanisms": ["kpm"], "draws": 3}"#,
    )
    .unwrap();
    let out = wproj(&["bench", "ring", "--config", config.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 3);

    fs::write(&config, r#"{"epsilonz": [2]}"#).unwrap();
    assert!(!wproj(&["bench", "ring", "--config", config.to_str().unwrap()]).status.success());
}

#[test]
fn bench_worst_case_orders_columns() {
    let v = json(&["bench", "worst-case", "--k", "6", "--eps", "1", "--md-iters", "200"]);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert!(r["utility"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn project_output_feeds_sample() {
    let dir = TempDir::new().unwrap();
    let (cost, mu) = ring_files(dir.path(), 6);
    let out = dir.path().join("out.json");
    assert!(wproj(&["project", "--cost", &cost, "--mu", &mu, "--eps", "1", "--out", out.to_str().unwrap()])
        .status
        .success());
    let v = json(&["sample", "--nu", out.to_str().unwrap(), "--n", "20", "--seed", "1"]);
    assert_eq!(v["samples"].as_array().unwrap().len(), 20);
}
