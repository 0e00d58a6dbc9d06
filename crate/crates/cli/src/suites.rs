//! End-to-end verification suites. Each criterion runs the simulator at a
//! fixed seed and compares it with exact values from the oracle or from
//! direct enumeration.

use std::borrow::Cow;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use collapse_core::diagnostics::{
    chi_square_gof, fixation_histogram, jensen_gap, martingale_residuals_with, SE_BAND,
};
use collapse_core::dynamics::{
    run_ensemble_with, step_with, ExactKernel, GenerationState, RngStream, SamplingKernel,
    SourceTag,
};
use collapse_core::measure::{integrate, make_cdc, TestFunction};
use collapse_core::oracle::{
    absorption_probs, absorption_times, build_chain, collapse_cdf_from,
    expected_collapse_time_from, exact_mean_trajectory, stationary_distribution,
};
use collapse_core::{ExperimentConfig, OracleChain, ProbVector, Support};
use rayon::prelude::*;
use serde::Serialize;

use crate::commands::write_ensemble;
use crate::error::{CliError, Result};

pub const SUITES: &[&str] = &[
    "all",
    "collapse-small",
    "degeneration",
    "martingale",
    "determinism",
];

pub fn suite_criteria(name: &str) -> Result<&'static [u32]> {
    Ok(match name {
        "all" => &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10],
        "collapse-small" => &[1, 2, 3, 7, 8],
        "degeneration" => &[4, 5, 9],
        "martingale" => &[6],
        "determinism" => &[10],
        other => {
            return Err(CliError::Usage(format!(
                "unknown suite {other:?}; expected one of {}",
                SUITES.join(", ")
            )))
        }
    })
}

/// Which sampling kernel the suite drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Fixture {
    Exact,
    /// Moves [`BIAS`] of the empirical law's mass from atom 0 to atom 1.
    /// Every statistical criterion fails under it; determinism does not
    /// depend on the kernel.
    BiasedResampling,
}

pub const BIAS: f64 = 0.1;

struct BiasedKernel;

impl SamplingKernel for BiasedKernel {
    fn source_law<'a>(
        &self,
        tag: SourceTag,
        state: &'a GenerationState,
        cfg: &'a ExperimentConfig,
    ) -> Cow<'a, ProbVector> {
        let law = ExactKernel.source_law(tag, state, cfg);
        if tag != SourceTag::Empirical || law.len() < 2 {
            return law;
        }
        let mut w = law.weights().to_vec();
        let moved = w[0].min(BIAS);
        w[0] -= moved;
        w[1] += moved;
        Cow::Owned(ProbVector::from_unnormalized(w).expect("mass moved between atoms"))
    }
}

impl Fixture {
    fn kernel(self) -> &'static dyn SamplingKernel {
        match self {
            Fixture::Exact => &ExactKernel,
            Fixture::BiasedResampling => &BiasedKernel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `|measured - expected| <= tolerance`
    Within,
    /// `measured >= expected`
    AtLeast,
    /// `measured <= expected`
    AtMost,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub label: String,
    pub measured: f64,
    pub expected: f64,
    pub relation: Relation,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    pub fn within(label: impl Into<String>, measured: f64, expected: f64, tolerance: f64) -> Self {
        Check {
            label: label.into(),
            measured,
            expected,
            relation: Relation::Within,
            tolerance,
            passed: (measured - expected).abs() <= tolerance,
        }
    }

    pub fn at_least(label: impl Into<String>, measured: f64, bound: f64) -> Self {
        Check {
            label: label.into(),
            measured,
            expected: bound,
            relation: Relation::AtLeast,
            tolerance: 0.0,
            passed: measured >= bound,
        }
    }

    pub fn at_most(label: impl Into<String>, measured: f64, bound: f64) -> Self {
        Check {
            label: label.into(),
            measured,
            expected: bound,
            relation: Relation::AtMost,
            tolerance: 0.0,
            passed: measured <= bound,
        }
    }

    fn describe(&self) -> String {
        match self.relation {
            Relation::Within => format!(
                "{}: measured {:.6} expected {:.6} +/- {:.2e}",
                self.label, self.measured, self.expected, self.tolerance
            ),
            Relation::AtLeast => format!(
                "{}: measured {:.6} needs >= {:.6}",
                self.label, self.measured, self.expected
            ),
            Relation::AtMost => format!(
                "{}: measured {:.6} needs <= {:.6}",
                self.label, self.measured, self.expected
            ),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub seed: u64,
    pub runtime_s: f64,
    pub runtime_limit_s: Option<f64>,
    pub checks: Vec<Check>,
    pub error: Option<String>,
}

impl CriterionReport {
    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// `[PASS] C1 name (n/n checks, 0.42 s)`
    pub fn summary_line(&self) -> String {
        let ok = self.checks.iter().filter(|c| c.passed).count();
        format!(
            "[{}] C{} {} ({}/{} checks, {:.2} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            ok,
            self.checks.len(),
            self.runtime_s
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub fixture: Fixture,
    pub passed: bool,
    pub criteria: Vec<CriterionReport>,
}

impl SuiteReport {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "suite {} ({:?}): {}\n",
            self.suite,
            self.fixture,
            if self.passed { "PASS" } else { "FAIL" }
        );
        for c in &self.criteria {
            let _ = writeln!(out, "{}", c.summary_line());
            if let Some(e) = &c.error {
                let _ = writeln!(out, "    error: {e}");
            }
            for check in c.failed_checks() {
                let _ = writeln!(out, "    {}", check.describe());
            }
        }
        out
    }

    pub fn failed_ids(&self) -> Vec<u32> {
        self.criteria.iter().filter(|c| !c.passed).map(|c| c.id).collect()
    }
}

/// Where criterion 10 writes its scratch outputs.
pub struct Context {
    pub fixture: Fixture,
    pub scratch: PathBuf,
}

impl Context {
    pub fn new(fixture: Fixture, scratch: &Path) -> Self {
        Context {
            fixture,
            scratch: scratch.to_path_buf(),
        }
    }

    fn kernel(&self) -> &'static dyn SamplingKernel {
        self.fixture.kernel()
    }
}

struct Criterion {
    id: u32,
    name: &'static str,
    seed: u64,
    runtime_limit_s: Option<f64>,
    run: fn(&Context, u64) -> Result<Vec<Check>>,
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        id: 1,
        name: "collapse time matches the exact chain",
        seed: 1001,
        runtime_limit_s: Some(10.0),
        run: collapse_time,
    },
    Criterion {
        id: 2,
        name: "fixation law equals the initial frequencies",
        seed: 1002,
        runtime_limit_s: Some(30.0),
        run: fixation_law,
    },
    Criterion {
        id: 3,
        name: "collapse CDF 1 - 2^-n",
        seed: 1003,
        runtime_limit_s: Some(10.0),
        run: collapse_cdf,
    },
    Criterion {
        id: 4,
        name: "stationary law has barycenter mu0",
        seed: 1004,
        runtime_limit_s: Some(60.0),
        run: stationary_barycenter,
    },
    Criterion {
        id: 5,
        name: "ensemble mean follows the mean recursion",
        seed: 1005,
        runtime_limit_s: Some(60.0),
        run: mean_recursion,
    },
    Criterion {
        id: 6,
        name: "one-step martingale residuals vanish",
        seed: 1006,
        runtime_limit_s: Some(60.0),
        run: martingale,
    },
    Criterion {
        id: 7,
        name: "Jensen gap of the square",
        seed: 1007,
        runtime_limit_s: None,
        run: jensen,
    },
    Criterion {
        id: 8,
        name: "one-step law matches the oracle row",
        seed: 1008,
        runtime_limit_s: Some(5.0),
        run: one_step_law,
    },
    Criterion {
        id: 9,
        name: "no collapse under persistent excitation",
        seed: 1009,
        runtime_limit_s: None,
        run: no_collapse,
    },
    Criterion {
        id: 10,
        name: "ensemble output independent of parallelism",
        seed: 1010,
        runtime_limit_s: None,
        run: determinism,
    },
];

pub fn run_criterion(id: u32, ctx: &Context) -> Result<CriterionReport> {
    let criterion = CRITERIA
        .iter()
        .find(|s| s.id == id)
        .ok_or_else(|| CliError::Usage(format!("no criterion {id}")))?;
    let start = Instant::now();
    let outcome = (criterion.run)(ctx, criterion.seed);
    let runtime_s = start.elapsed().as_secs_f64();
    let (mut checks, error) = match outcome {
        Ok(checks) => (checks, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    if let Some(limit) = criterion.runtime_limit_s {
        checks.push(Check::at_most("runtime seconds", runtime_s, limit));
    }
    let passed = error.is_none() && checks.iter().all(|c| c.passed);
    Ok(CriterionReport {
        id,
        name: criterion.name.to_string(),
        passed,
        seed: criterion.seed,
        runtime_s,
        runtime_limit_s: criterion.runtime_limit_s,
        checks,
        error,
    })
}

pub fn run_suite(name: &str, ctx: &Context) -> Result<SuiteReport> {
    let ids = suite_criteria(name)?;
    let criteria = ids
        .iter()
        .map(|&id| run_criterion(id, ctx))
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteReport {
        suite: name.to_string(),
        fixture: ctx.fixture,
        passed: criteria.iter().all(|c| c.passed),
        criteria,
    })
}

fn pv(w: &[f64]) -> Result<ProbVector> {
    Ok(ProbVector::new(w.to_vec())?)
}

fn two_atom_drift(seed: u64, horizon: usize) -> Result<ExperimentConfig> {
    Ok(ExperimentConfig::new(ProbVector::uniform(2)?, 2, 0.0, 0.0)?
        .with_horizon(horizon)
        .with_seed(seed))
}

/// Atom on which each absorbing state of a pure-resampling chain sits.
fn absorbing_atoms(chain: &OracleChain) -> Vec<usize> {
    let n = chain.batch_size() as u64;
    chain
        .absorbing()
        .iter()
        .map(|&s| {
            chain.states()[s]
                .counts()
                .iter()
                .position(|&c| c == n)
                .expect("absorbing states are Dirac compositions")
        })
        .collect()
}

fn collapse_time(ctx: &Context, seed: u64) -> Result<Vec<Check>> {
    let cfg = two_atom_drift(seed, 200)?;
    let chain = OracleChain::from_config(&cfg)?;
    let times = absorption_times(&chain)?;
    let middle = chain.state_index(&[1, 1]).expect("state (1, 1) exists");
    let from_mu0 = expected_collapse_time_from(&chain, &times, &cfg.mu0)?;

    let stats = run_ensemble_with(ctx.kernel(), &cfg, 100_000)?;
    let mean = stats.mean_collapse_time().map_or(f64::NAN, |m| m.mean);
    Ok(vec![
        Check::within("oracle t(1,1)", times[middle], 2.0, 1e-9),
        Check::within("oracle collapse time from mu0", from_mu0, 2.0, 1e-9),
        Check::within("mean collapse time", mean, from_mu0, 0.02),
        Check::at_most("runs not collapsed", stats.not_collapsed as f64, 0.0),
    ])
}

fn fixation_law(ctx: &Context, seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();

    let cfg = two_atom_drift(seed, 200)?;
    let stats = run_ensemble_with(ctx.kernel(), &cfg, 100_000)?;
    let report = fixation_histogram(&stats)?;
    checks.push(Check::within(
        "K=2 fixation on atom 0",
        report.frequencies[0],
        0.5,
        0.006,
    ));

    let start = [0.2, 0.3, 0.5];
    let cfg = ExperimentConfig::new(pv(&start)?, 5, 0.0, 0.0)?
        .with_horizon(1000)
        .with_seed(seed);
    let chain = OracleChain::from_config(&cfg)?;
    let exact = absorption_probs(&chain)?.from_measure(&chain, &cfg.mu0)?;
    let atoms = absorbing_atoms(&chain);
    let stats = run_ensemble_with(ctx.kernel(), &cfg, 100_000)?;
    let report = fixation_histogram(&stats)?;
    checks.push(Check::at_most(
        "K=3 runs not collapsed",
        report.uncollapsed as f64,
        0.0,
    ));
    for (j, &atom) in atoms.iter().enumerate() {
        checks.push(Check::within(
            format!("K=3 oracle fixation on atom {atom}"),
            exact[j],
            start[atom],
            1e-9,
        ));
        checks.push(Check::within(
            format!("K=3 fixation on atom {atom}"),
            report.frequencies[atom],
            exact[j],
            3.0 * report.standard_errors[atom],
        ));
    }
    Ok(checks)
}

fn collapse_cdf(ctx: &Context, seed: u64) -> Result<Vec<Check>> {
    let cfg = two_atom_drift(seed, 11)?;
    let chain = OracleChain::from_config(&cfg)?;
    let exact = collapse_cdf_from(&chain, &cfg.mu0, 10)?;
    let stats = run_ensemble_with(ctx.kernel(), &cfg, 100_000)?;
    let mut checks = Vec::new();
    for n in 1..=10 {
        let closed = 1.0 - 0.5f64.powi(n as i32);
        checks.push(Check::within(
            format!("oracle collapsed by n={n}"),
            exact[n],
            closed,
            1e-12,
        ));
        checks.push(Check::within(
            format!("collapsed by n={n}"),
            stats.generations[n].collapsed_fraction,
            closed,
            0.01,
        ));
    }
    Ok(checks)
}

fn stationary_barycenter(ctx: &Context, seed: u64) -> Result<Vec<Check>> {
    const GENERATIONS: usize = 1_000_000;
    let mu0 = ProbVector::uniform(2)?;
    let support = Support::new(2)?;
    let chain = build_chain(2, &support, 0.5, &mu0)?;
    let report = stationary_distribution(&chain)?;
    let f = TestFunction::indicator(2, 0)?;
    let mut checks = Vec::new();
    for (s, state) in chain.states().iter().enumerate() {
        let expected = if state.counts() == [1, 1] { 3.0 / 7.0 } else { 2.0 / 7.0 };
        checks.push(Check::within(
            format!("oracle pi{:?}", state.counts()),
            report.distribution[s],
            expected,
            1e-9,
        ));
    }
    for (i, &b) in report.barycenter.iter().enumerate() {
        checks.push(Check::within(format!("oracle barycenter[{i}]"), b, 0.5, 1e-9));
    }
    let (_, oracle_var) = report.moments(&chain, &f)?;
    checks.push(Check::within("oracle variance", oracle_var, 1.0 / 7.0, 1e-9));

    let cfg = ExperimentConfig::new(mu0, 2, 0.5, 0.0)?
        .with_horizon(GENERATIONS + 1)
        .with_seed(seed);
    let mut rng = RngStream::new(seed, 0);
    let mut state = GenerationState::initial(&cfg);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..GENERATIONS {
        state = step_with(ctx.kernel(), &state, &cfg, &mut rng)?.0;
        let x = integrate(&state.mu, &f)?;
        sum += x;
        sum_sq += x * x;
    }
    let n = GENERATIONS as f64;
    let mean = sum / n;
    let variance = sum_sq / n - mean * mean;
    checks.push(Check::within("time-average mu_n(f)", mean, 0.5, 0.005));
    checks.push(Check::within("time-average variance", variance, 1.0 / 7.0, 0.005));
    Ok(checks)
}

fn mean_recursion(ctx: &Context, seed: u64) -> Result<Vec<Check>> {
    const HORIZON: usize = 30;
    let mu0 = pv(&[0.2, 0.3, 0.5])?;
    let mut checks = Vec::new();
    for a in [0.1, 0.5, 0.9] {
        let cfg = ExperimentConfig::new(mu0.clone(), 10, a, 0.5)?
            .with_horizon(HORIZON + 1)
            .with_seed(seed);
        let stats = run_ensemble_with(ctx.kernel(), &cfg, 20_000)?;
        for (i, f) in make_cdc(&cfg.support).iter().enumerate() {
            let source = integrate(&mu0, f)?;
            let start = integrate(&GenerationState::initial(&cfg).mu, f)?;
            for n in 0..=HORIZON {
                let closed = source + (1.0 - a).powi(n as i32) * (start - source);
                checks.push(Check::within(
                    format!("a={a} n={n} f{i}"),
                    stats.moments(n, i).mean,
                    closed,
                    SE_BAND * stats.standard_error(n, i),
                ));
            }
        }
    }

    // theta0 away from mu0: the parametric source pulls the mean toward it
    let cfg = ExperimentConfig::new(mu0, 10, 0.5, 0.5)?
        .with_theta0(pv(&[0.6, 0.3, 0.1])?)
        .with_horizon(HORIZON + 1)
        .with_seed(seed);
    let stats = run_ensemble_with(ctx.kernel(), &cfg, 20_000)?;
    for (i, f) in make_cdc(&cfg.support).iter().enumerate() {
        let exact = exact_mean_trajectory(&cfg, f, HORIZON)?;
        for n in 0..=HORIZON {
            checks.push(Check::within(
                format!("theta0 != mu0 n={n} f{i}"),
                stats.moments(n, i).mean,
                exact[n],
                SE_BAND * stats.standard_error(n, i),
            ));
        }
    }
    Ok(checks)
}

fn martingale(ctx: &Context, seed: u64) -> Result<Vec<Check>> {
    const STATES: usize = 20;
    const REPLICAS: usize = 100_000;
    let mut rng = RngStream::new(seed, u64::MAX);
    let mut pick = |lo: usize, hi: usize| lo + ((rng.uniform() * (hi - lo + 1) as f64) as usize).min(hi - lo);
    let mut draws = Vec::new();
    for s in 0..STATES {
        let k = pick(2, 4);
        let n = pick(1, 8);
        let regime = s % 3;
        let a_pct = pick(5, 95);
        let b_pct = pick(5, 95);
        let counts: Vec<usize> = (0..n).map(|_| pick(0, k - 1)).collect();
        let theta_raw: Vec<usize> = (0..k).map(|_| pick(1, 20)).collect();
        draws.push((k, n, regime, a_pct, b_pct, counts, theta_raw));
    }

    let mut checks = Vec::new();
    for (s, (k, n, regime, a_pct, b_pct, samples, theta_raw)) in draws.into_iter().enumerate() {
        let (a, b) = match regime {
            0 => (0.0, 0.0),
            1 => (a_pct as f64 / 100.0, 0.0),
            _ => (a_pct as f64 / 100.0, b_pct as f64 / 100.0),
        };
        let mut counts = vec![0u64; k];
        for x in samples {
            counts[x] += 1;
        }
        let theta =
            ProbVector::from_unnormalized(theta_raw.iter().map(|&w| w as f64).collect())?;
        let cfg = ExperimentConfig::new(ProbVector::uniform(k)?, n, a, b)?
            .with_theta0(theta.clone())
            .with_seed(seed + s as u64);
        let state = GenerationState {
            n: 0,
            mu: ProbVector::from_counts(&counts)?,
            theta,
        };
        for (i, f) in make_cdc(&cfg.support).iter().enumerate() {
            let r = martingale_residuals_with(ctx.kernel(), &state, &cfg, REPLICAS, f)?;
            let label = format!("state {s} (K={k} N={n} a={a} b={b}) f{i}");
            checks.push(Check::within(
                format!("{label} mu"),
                r.mu.mean_residual,
                0.0,
                SE_BAND * r.mu.standard_error,
            ));
            checks.push(Check::within(
                format!("{label} theta"),
                r.theta.mean_residual,
                0.0,
                SE_BAND * r.theta.standard_error,
            ));
        }
    }
    Ok(checks)
}

fn jensen(ctx: &Context, seed: u64) -> Result<Vec<Check>> {
    let cfg = two_atom_drift(seed, 21)?;
    let f = TestFunction::indicator(2, 0)?;

    // enumerate the first step exactly
    let chain = OracleChain::from_config(&cfg)?;
    let first = chain.step_from_measure(&cfg.mu0)?;
    let values: Vec<f64> = (0..chain.len())
        .map(|s| chain.state_value(s, &f))
        .collect::<collapse_core::Result<_>>()?;
    let m1: f64 = first.iter().zip(&values).map(|(p, v)| p * v).sum();
    let m2: f64 = first.iter().zip(&values).map(|(p, v)| p * v * v).sum();
    let enumerated = m2 - m1 * m1;

    let stats = run_ensemble_with(ctx.kernel(), &cfg, 100_000)?;
    let square = |x: f64| x * x;
    let mut checks = vec![Check::within("enumerated gap", enumerated, 0.125, 1e-12)];
    let gap1 = jensen_gap(&stats, 1, 0, &square)?;
    checks.push(Check::within("gap at n=1", gap1.gap, enumerated, 0.01));
    for n in 0..=20 {
        let g = jensen_gap(&stats, n, 0, &square)?;
        checks.push(Check::at_least(
            format!("gap at n={n} lower band"),
            g.gap,
            -SE_BAND * g.standard_error,
        ));
    }
    Ok(checks)
}

fn one_step_law(ctx: &Context, seed: u64) -> Result<Vec<Check>> {
    const TRANSITIONS: u64 = 100_000;
    let cfg = two_atom_drift(seed, 2)?;
    let chain = OracleChain::from_config(&cfg)?;
    let from = chain.state_index(&[1, 1]).expect("state (1, 1) exists");
    let row = chain.row(from).to_vec();
    let state = GenerationState {
        n: 0,
        mu: pv(&[0.5, 0.5])?,
        theta: pv(&[0.5, 0.5])?,
    };
    let kernel = ctx.kernel();
    let landed: Vec<usize> = (0..TRANSITIONS)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::new(seed, r);
            let (next, batch) = step_with(kernel, &state, &cfg, &mut rng)?;
            let counts = collapse_core::measure::count_atoms(&batch.samples, 2)?;
            debug_assert_eq!(ProbVector::from_counts(&counts)?, next.mu);
            Ok(chain.state_index(&counts).expect("batch is a composition"))
        })
        .collect::<collapse_core::Result<_>>()?;
    let mut observed = vec![0u64; chain.len()];
    for s in landed {
        observed[s] += 1;
    }
    let test = chi_square_gof(&observed, &row)?;
    let mut checks: Vec<Check> = [0.25, 0.5, 0.25]
        .iter()
        .zip(&row)
        .enumerate()
        .map(|(s, (&want, &got))| Check::within(format!("oracle row[{s}]"), got, want, 1e-12))
        .collect();
    checks.push(Check::at_least("chi-square p-value", test.p_value, 1e-4));
    Ok(checks)
}

fn no_collapse(ctx: &Context, seed: u64) -> Result<Vec<Check>> {
    const HORIZON: usize = 500;
    let cfg = ExperimentConfig::new(ProbVector::uniform(2)?, 10, 0.2, 0.5)?
        .with_horizon(HORIZON + 1)
        .with_seed(seed);
    let stats = run_ensemble_with(ctx.kernel(), &cfg, 10_000)?;
    let last = &stats.generations[HORIZON];
    let mut checks = vec![Check::at_most("absorbed runs", last.collapsed as f64, 0.0)];
    for i in 0..2 {
        checks.push(Check::within(
            format!("mean mu_n(f{i}) at n={HORIZON}"),
            stats.moments(HORIZON, i).mean,
            0.5,
            0.02,
        ));
    }
    Ok(checks)
}

fn determinism(ctx: &Context, seed: u64) -> Result<Vec<Check>> {
    let cfg = ExperimentConfig::new(pv(&[0.2, 0.3, 0.5])?, 4, 0.05, 0.25)?
        .with_horizon(50)
        .with_seed(seed);
    let runs = 5_000;
    let mut files = Vec::new();
    for parallelism in [1, 8] {
        let dir = ctx.scratch.join(format!("determinism_p{parallelism}"));
        write_ensemble(&cfg, runs, &dir, parallelism, ctx.kernel())?;
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read(&path).map_err(|e| CliError::Io { path, source: e })
        };
        files.push((read("summary.json")?, read("moments.csv")?));
    }
    let same = |x: bool| if x { 1.0 } else { 0.0 };
    Ok(vec![
        Check::within("summary.json identical", same(files[0].0 == files[1].0), 1.0, 0.0),
        Check::within("moments.csv identical", same(files[0].1 == files[1].1), 1.0, 0.0),
    ])
}
