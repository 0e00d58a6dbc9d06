use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use collapse_cli::output::parse_row_line;
use serde_json::Value;

fn collapse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_collapse"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

const BASE: &str = "a = 0.3\nb = 0.5\nc = 0.5\nN = 10\nhorizon = 10\nmaster_seed = 7\nmu0 = [0.2, 0.3, 0.5]\n";

#[test]
fn run_writes_one_row_per_generation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", BASE);
    let out = tmp.path().join("run");
    let res = collapse(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));

    let text = fs::read_to_string(out.join("trajectory_00000.jsonl")).unwrap();
    let rows: Vec<_> = text.lines().map(|l| parse_row_line(l).unwrap()).collect();
    assert_eq!(rows.len(), 10);
    assert_eq!(rows.iter().map(|r| r.n).collect::<Vec<_>>(), (0..10).collect::<Vec<_>>());
    assert_eq!(rows[0].mu, vec![0.2, 0.3, 0.5]);
    assert!(rows.iter().all(|r| !r.collapsed));

    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["subcommand"], "run");
    for file in manifest["outputs"].as_array().unwrap() {
        assert!(out.join(file.as_str().unwrap()).exists(), "{file}");
    }
    assert_eq!(manifest["config_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn invalid_mixture_names_the_constraint() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &BASE.replace("c = 0.5", "c = 0.4"));
    let res = collapse(&["run", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&res), 1);
    assert!(String::from_utf8_lossy(&res.stderr).contains("b + c must equal 1"));
}

#[test]
fn override_changes_digest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", BASE);
    let cfg = cfg.to_str().unwrap();
    let base = tmp.path().join("base");
    let over = tmp.path().join("over");
    assert_eq!(code(&collapse(&["run", "--config", cfg, "--out", base.to_str().unwrap()])), 0);
    assert_eq!(
        code(&collapse(&["run", "--config", cfg, "--out", over.to_str().unwrap(), "--override", "a=0"])),
        0
    );
    let d1 = json(&base.join("manifest.json"))["config_digest"].clone();
    let d2 = json(&over.join("manifest.json"))["config_digest"].clone();
    assert_ne!(d1, d2);
}

#[test]
fn seed_flag_changes_trajectories_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", BASE);
    let cfg = cfg.to_str().unwrap();
    let read = |dir: &str, seed: &str| {
        let out = tmp.path().join(dir);
        assert_eq!(code(&collapse(&["run", "--config", cfg, "--out", out.to_str().unwrap(), "--seed", seed, "--runs", "3"])), 0);
        fs::read_to_string(out.join("trajectory_00002.jsonl")).unwrap()
    };
    assert_eq!(read("a", "11"), read("b", "11"));
    assert_ne!(read("c", "11"), read("d", "12"));
}

#[test]
fn unwritable_output_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", BASE);
    let blocker = write_config(tmp.path(), "file", "");
    let res = collapse(&["run", "--config", cfg.to_str().unwrap(), "--out", blocker.join("sub").to_str().unwrap()]);
    assert_ne!(code(&res), 0);
}

#[test]
fn ensemble_single_run_matches_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &BASE.replace("a = 0.3", "a = 0"));
    let cfg = cfg.to_str().unwrap();
    let ens = tmp.path().join("ens");
    let run = tmp.path().join("run");
    assert_eq!(code(&collapse(&["ensemble", "--config", cfg, "--out", ens.to_str().unwrap(), "--runs", "1"])), 0);
    assert_eq!(code(&collapse(&["run", "--config", cfg, "--out", run.to_str().unwrap()])), 0);

    let summary = json(&ens.join("summary.json"));
    let text = fs::read_to_string(run.join("trajectory_00000.jsonl")).unwrap();
    let rows: Vec<_> = text.lines().map(|l| parse_row_line(l).unwrap()).collect();
    let generations = summary["generations"].as_array().unwrap();
    assert_eq!(generations.len(), 10);
    for (n, g) in generations.iter().enumerate() {
        // past absorption the ensemble repeats the final Dirac row
        let row = &rows[n.min(rows.len() - 1)];
        for (i, m) in g["moments"].as_array().unwrap().iter().enumerate() {
            assert_eq!(m["mean"].as_f64().unwrap(), row.mu[i], "n={n} f={i}");
            assert_eq!(m["variance"].as_f64().unwrap(), 0.0);
        }
        assert!(g.get("collapsed_fraction").is_some());
    }
    assert!(!ens.join("summary.json").to_str().unwrap().is_empty());
    let report = collapse(&["report", "--out", ens.to_str().unwrap()]);
    assert_eq!(code(&report), 0);
    assert!(String::from_utf8_lossy(&report.stdout).contains("not collapsed"));
}

#[test]
fn ensemble_is_independent_of_parallelism() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", BASE);
    let cfg = cfg.to_str().unwrap();
    let mut summaries = Vec::new();
    for p in ["1", "8"] {
        let out = tmp.path().join(format!("p{p}"));
        let res = collapse(&["ensemble", "--config", cfg, "--out", out.to_str().unwrap(), "--runs", "1500", "--parallelism", p]);
        assert_eq!(code(&res), 0);
        summaries.push(fs::read(out.join("summary.json")).unwrap());
    }
    assert_eq!(summaries[0], summaries[1]);
}

#[test]
fn oracle_absorbing_and_stationary() {
    let tmp = tempfile::tempdir().unwrap();
    let drift = write_config(tmp.path(), "d.toml", "a = 0\nN = 2\nmu0 = [0.5, 0.5]\n");
    let out = tmp.path().join("drift");
    assert_eq!(code(&collapse(&["oracle", "--config", drift.to_str().unwrap(), "--out", out.to_str().unwrap()])), 0);
    let states = fs::read_to_string(out.join("states.csv")).unwrap();
    let middle = states
        .lines()
        .skip(1)
        .find(|l| l.ends_with(",1,1,0"))
        .and_then(|l| l.split(',').next())
        .unwrap()
        .to_string();
    let absorption = fs::read_to_string(out.join("absorption.csv")).unwrap();
    let row = absorption.lines().find(|l| l.starts_with(&format!("{middle},"))).unwrap();
    let t: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((t - 2.0).abs() < 1e-12);
    assert!((json(&out.join("oracle.json"))["expected_collapse_time_from_mu0"].as_f64().unwrap() - 2.0).abs() < 1e-12);

    let excited = write_config(tmp.path(), "e.toml", "a = 0.5\nN = 2\nmu0 = [0.5, 0.5]\n");
    let out = tmp.path().join("excited");
    assert_eq!(code(&collapse(&["oracle", "--config", excited.to_str().unwrap(), "--out", out.to_str().unwrap()])), 0);
    let bary = json(&out.join("oracle.json"))["barycenter"].clone();
    for b in bary.as_array().unwrap() {
        assert!((b.as_f64().unwrap() - 0.5).abs() < 1e-9);
    }
    assert!(out.join("stationary.csv").exists());
}

#[test]
fn oracle_rejects_parametric_and_oversized() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "a = 0\nb = 0.5\nN = 2\nmu0 = [0.5, 0.5]\n");
    let res = collapse(&["oracle", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&res), 1);
    assert!(String::from_utf8_lossy(&res.stderr).contains("unsupported"));

    let weights = ["0.1"; 10].join(", ");
    let cfg = write_config(tmp.path(), "big.toml", &format!("a = 0\nN = 200\nmu0 = [{weights}]\n"));
    let res = collapse(&["oracle", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("b").to_str().unwrap()]);
    assert_eq!(code(&res), 2);
}

#[test]
fn verify_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let res = collapse(&["verify", "--suite", "nonexistent", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&res), 1);
    let res = collapse(&["frobnicate"]);
    assert_eq!(code(&res), 1);
    assert_eq!(code(&collapse(&["--help"])), 0);
}

#[test]
fn verify_determinism_suite_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let res = collapse(&["verify", "--suite", "determinism", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stdout));
    let report = json(&tmp.path().join("verify_report.json"));
    assert_eq!(report["passed"], true);
    assert_eq!(report["criteria"][0]["seed"], 1010);
}

#[test]
fn injected_bias_fails_the_suite() {
    let tmp = tempfile::tempdir().unwrap();
    let res = collapse(&["verify", "--suite", "collapse-small", "--out", tmp.path().to_str().unwrap(), "--inject-bias"]);
    assert_eq!(code(&res), 3);
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("[FAIL] C8"), "{stdout}");
    assert!(String::from_utf8_lossy(&res.stderr).contains("C8"));
}
