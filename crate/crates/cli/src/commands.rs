//! The subcommands. Each returns `Ok` on success; the binary maps errors to
//! exit codes through [`CliError::exit_code`].

use std::path::{Path, PathBuf};

use collapse_core::diagnostics::fixation_histogram;
use collapse_core::dynamics::{run_ensemble_with, run_trajectory, ExactKernel, SamplingKernel};
use collapse_core::oracle::{
    absorption_probs, absorption_times, expected_collapse_time_from, stationary_distribution,
};
use collapse_core::{EnsembleStats, ExperimentConfig, OracleChain};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::load_config;
use crate::error::{CliError, Result};
use crate::manifest::{ManifestBuilder, RunManifest};
use crate::output::{to_json, trajectory_jsonl, Cell, Csv, OutDir};
use crate::suites::{run_suite, Context, Fixture, SuiteReport};

pub const SUMMARY_FILE: &str = "summary.json";
pub const VERIFY_JSON: &str = "verify_report.json";
pub const VERIFY_TEXT: &str = "verify_report.txt";
pub const REPORT_FILE: &str = "report.txt";

/// Config source shared by `run`, `ensemble` and `oracle`.
#[derive(Debug, Clone, Default)]
pub struct ConfigArgs {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    pub fn load(&self) -> Result<ExperimentConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("master_seed=\"{seed}\""));
        }
        load_config(&self.config, &overrides)
    }
}

fn with_pool<T: Send>(parallelism: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| CliError::ResourceLimit(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Writes `trajectory_{i:05}.jsonl` for `i in 0..runs`, then the manifest.
pub fn cmd_run(args: &ConfigArgs, out: &Path, runs: usize, parallelism: usize) -> Result<RunManifest> {
    let manifest = ManifestBuilder::start("run");
    let cfg = args.load()?;
    if runs == 0 {
        return Err(CliError::Config("runs must be at least 1".into()));
    }
    let mut dir = OutDir::create(out)?;
    let records = with_pool(parallelism, || {
        (0..runs as u64)
            .into_par_iter()
            .map(|i| run_trajectory(&cfg, i))
            .collect::<collapse_core::Result<Vec<_>>>()
    })??;
    let mut details = Vec::with_capacity(runs);
    for record in &records {
        dir.write(
            &format!("trajectory_{:05}.jsonl", record.trajectory_index),
            &trajectory_jsonl(&record.rows)?,
        )?;
        details.push(json!({
            "trajectory_index": record.trajectory_index,
            "rows": record.rows.len(),
            "collapse_time": record.collapse_time,
        }));
    }
    dir.write("config.toml", &cfg.canonical_text())?;
    manifest
        .config(cfg.digest(), cfg.master_seed)
        .finish(&mut dir, json!({ "trajectories": details }))
}

/// Runs the ensemble on a pool of `parallelism` threads (0 = one per core)
/// and writes the summary and tables into `out`. Returns the files written.
pub fn write_ensemble(
    cfg: &ExperimentConfig,
    runs: usize,
    out: &Path,
    parallelism: usize,
    kernel: &dyn SamplingKernel,
) -> Result<(OutDir, EnsembleStats)> {
    let stats = with_pool(parallelism, || run_ensemble_with(kernel, cfg, runs))??;
    let mut dir = OutDir::create(out)?;
    dir.write(SUMMARY_FILE, &to_json(&stats)?)?;

    let mut moments = Csv::new(&[
        "n",
        "f",
        "mean",
        "variance",
        "second_moment",
        "exact_mean",
        "collapsed_fraction",
    ]);
    for g in &stats.generations {
        for (i, m) in g.moments.iter().enumerate() {
            moments.row(vec![
                g.n.into(),
                i.into(),
                m.mean.into(),
                m.variance.into(),
                m.second_moment.into(),
                g.barycenter[i].into(),
                g.collapsed_fraction.into(),
            ]);
        }
    }
    dir.write("moments.csv", moments.as_str())?;

    let mut times = Csv::new(&["time", "count"]);
    for bin in &stats.collapse_times {
        times.row(vec![bin.time.into(), bin.count.into()]);
    }
    dir.write("collapse_times.csv", times.as_str())?;

    let mut fixation = Csv::new(&["atom", "label", "count", "frequency", "standard_error"]);
    let report = fixation_histogram(&stats).ok();
    for (atom, &count) in stats.fixation_counts.iter().enumerate() {
        let (freq, se) = report
            .as_ref()
            .map_or((f64::NAN, f64::NAN), |r| (r.frequencies[atom], r.standard_errors[atom]));
        fixation.row(vec![
            atom.into(),
            cfg.support.labels()[atom].as_str().into(),
            count.into(),
            freq.into(),
            se.into(),
        ]);
    }
    dir.write("fixation.csv", fixation.as_str())?;
    dir.write("config.toml", &cfg.canonical_text())?;
    Ok((dir, stats))
}

pub fn cmd_ensemble(
    args: &ConfigArgs,
    out: &Path,
    runs: usize,
    parallelism: usize,
) -> Result<RunManifest> {
    let manifest = ManifestBuilder::start("ensemble");
    let cfg = args.load()?;
    if runs == 0 {
        return Err(CliError::Config("runs must be at least 1".into()));
    }
    let (mut dir, stats) = write_ensemble(&cfg, runs, out, parallelism, &ExactKernel)?;
    let mean_time = stats.mean_collapse_time();
    let details = json!({
        "runs": runs,
        "parallelism": parallelism,
        "not_collapsed": stats.not_collapsed,
        "mean_collapse_time": mean_time.map(|m| m.mean),
        "mean_collapse_time_se": mean_time.map(|m| m.standard_error),
    });
    manifest
        .config(cfg.digest(), cfg.master_seed)
        .finish(&mut dir, details)
}

fn atom_of_dirac(chain: &OracleChain, state: usize) -> usize {
    let n = chain.batch_size() as u64;
    chain.states()[state]
        .counts()
        .iter()
        .position(|&c| c == n)
        .unwrap_or(usize::MAX)
}

pub fn cmd_oracle(args: &ConfigArgs, out: &Path) -> Result<RunManifest> {
    let manifest = ManifestBuilder::start("oracle");
    let cfg = args.load()?;
    let chain = OracleChain::from_config(&cfg)?;
    let mut dir = OutDir::create(out)?;
    let k = cfg.k();

    let mut header = vec!["state".to_string()];
    header.extend((0..k).map(|i| format!("count_{i}")));
    header.push("absorbing".into());
    let mut states = Csv::new(&header);
    for (s, state) in chain.states().iter().enumerate() {
        let mut row: Vec<Cell> = vec![s.into()];
        row.extend(state.counts().iter().map(|&c| Cell::from(c)));
        row.push(u64::from(chain.is_absorbing(s)).into());
        states.row(row);
    }
    dir.write("states.csv", states.as_str())?;

    let mut transition = Csv::new(&["from", "to", "probability"]);
    for from in 0..chain.len() {
        for (to, &p) in chain.row(from).iter().enumerate() {
            if p > 0.0 {
                transition.row(vec![from.into(), to.into(), p.into()]);
            }
        }
    }
    dir.write("transition.csv", transition.as_str())?;

    let details: Value = if cfg.a == 0.0 {
        let probs = absorption_probs(&chain)?;
        let times = absorption_times(&chain)?;
        let atoms: Vec<usize> = probs.absorbing.iter().map(|&s| atom_of_dirac(&chain, s)).collect();
        let mut header = vec!["state".to_string(), "expected_time".to_string()];
        header.extend(atoms.iter().map(|a| format!("p_fix_{a}")));
        let mut table = Csv::new(&header);
        for s in 0..chain.len() {
            let mut row: Vec<Cell> = vec![s.into(), times[s].into()];
            row.extend(probs.from_state(s).iter().map(|&p| Cell::from(p)));
            table.row(row);
        }
        dir.write("absorption.csv", table.as_str())?;
        let from_mu0 = probs.from_measure(&chain, &cfg.mu0)?;
        let mut fixation = vec![0.0; k];
        for (j, &atom) in atoms.iter().enumerate() {
            fixation[atom] = from_mu0[j];
        }
        json!({
            "regime": "absorbing",
            "states": chain.len(),
            "expected_collapse_time_from_mu0": expected_collapse_time_from(&chain, &times, &cfg.mu0)?,
            "fixation_from_mu0": fixation,
        })
    } else {
        let report = stationary_distribution(&chain)?;
        let mut table = Csv::new(&["state", "probability"]);
        for (s, &p) in report.distribution.iter().enumerate() {
            table.row(vec![s.into(), p.into()]);
        }
        dir.write("stationary.csv", table.as_str())?;
        json!({
            "regime": "stationary",
            "states": chain.len(),
            "barycenter": report.barycenter,
            "unique": report.unique,
            "extreme_barycenters": report.extreme_barycenters,
            "warning": report.warning,
        })
    };
    let mut summary = details.clone();
    summary["config_digest"] = json!(cfg.digest());
    dir.write("oracle.json", &to_json(&summary)?)?;
    dir.write("config.toml", &cfg.canonical_text())?;
    manifest
        .config(cfg.digest(), cfg.master_seed)
        .finish(&mut dir, details)
}

/// Runs a suite and writes its report. A failing suite is returned as
/// [`CliError::CriterionFailure`] after the report is on disk.
pub fn cmd_verify(
    suite: &str,
    out: &Path,
    fixture: Fixture,
    parallelism: usize,
) -> Result<SuiteReport> {
    let manifest = ManifestBuilder::start("verify");
    crate::suites::suite_criteria(suite)?;
    let mut dir = OutDir::create(out)?;
    let ctx = Context::new(fixture, &out.join("scratch"));
    let report = with_pool(parallelism, || run_suite(suite, &ctx))??;
    dir.write(VERIFY_JSON, &to_json(&report)?)?;
    dir.write(VERIFY_TEXT, &report.to_text())?;
    manifest.finish(
        &mut dir,
        json!({ "suite": suite, "fixture": fixture, "passed": report.passed }),
    )?;
    if !report.passed {
        let ids: Vec<String> = report.failed_ids().iter().map(|i| format!("C{i}")).collect();
        return Err(CliError::CriterionFailure(format!(
            "suite {suite}: failed {}",
            ids.join(", ")
        )));
    }
    Ok(report)
}

fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Record(format!("{}: {e}", path.display())))
}

fn ensemble_report(summary: &Value) -> Result<String> {
    let field = |key: &str| {
        summary
            .get(key)
            .ok_or_else(|| CliError::Record(format!("summary lacks {key:?}")))
    };
    let mut out = format!(
        "ensemble {}\nruns {} horizon {} N {} K {} a {} b {} c {}\n",
        field("config_digest")?.as_str().unwrap_or("?"),
        field("n_runs")?,
        field("horizon")?,
        field("batch_size")?,
        field("k")?,
        field("a")?,
        field("b")?,
        field("c")?,
    );
    let generations = field("generations")?
        .as_array()
        .ok_or_else(|| CliError::Record("generations is not a list".into()))?;
    out.push_str("n  collapsed  mean[f0]  exact[f0]  var[f0]\n");
    let step = (generations.len() / 20).max(1);
    for (i, g) in generations.iter().enumerate() {
        if i % step != 0 && i + 1 != generations.len() {
            continue;
        }
        let num = |v: &Value| v.as_f64().unwrap_or(f64::NAN);
        out.push_str(&format!(
            "{:<4} {:.4}  {:.6}  {:.6}  {:.6}\n",
            g["n"],
            num(&g["collapsed_fraction"]),
            num(&g["moments"][0]["mean"]),
            num(&g["barycenter"][0]),
            num(&g["moments"][0]["variance"]),
        ));
    }
    out.push_str(&format!("not collapsed: {}\n", field("not_collapsed")?));
    Ok(out)
}

/// Renders `summary.json` (from `ensemble`) or the verify report found in
/// `dir` as text, writes it to `report.txt` and returns it.
pub fn cmd_report(dir: &Path) -> Result<String> {
    let text = if dir.join(SUMMARY_FILE).exists() {
        ensemble_report(&read_json(&dir.join(SUMMARY_FILE))?)?
    } else if dir.join(VERIFY_TEXT).exists() {
        let path = dir.join(VERIFY_TEXT);
        std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?
    } else {
        return Err(CliError::Usage(format!(
            "{} holds neither {SUMMARY_FILE} nor {VERIFY_TEXT}",
            dir.display()
        )));
    };
    let path = dir.join(REPORT_FILE);
    std::fs::write(&path, &text).map_err(|e| CliError::io(&path, e))?;
    Ok(text)
}
