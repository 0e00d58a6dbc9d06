//! The generation kernel: one step of the resample-and-refit loop, whole
//! trajectories, and seeded ensembles.

use std::borrow::Cow;
use std::fmt::Write as _;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{EnsembleAccumulator, EnsembleStats};
use crate::error::{Error, Result};
use crate::measure::{count_atoms, mix, ProbVector, Support};

/// Tolerance on `b + c = 1`.
pub const MIXTURE_TOLERANCE: f64 = 1e-12;

/// Trajectories per ensemble work unit. Fixed so that results do not depend
/// on the number of worker threads.
const ENSEMBLE_CHUNK: usize = 512;

/// How the source of each batch element is chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceChoice {
    /// An independent coin for every sample.
    #[default]
    PerSample,
}

impl SourceChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceChoice::PerSample => "per_sample",
        }
    }
}

/// All parameters of one experiment.
///
/// Fields are public for convenient construction; every entry point that
/// runs the chain calls [`ExperimentConfig::validate`] first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    /// Probability that a sample comes from the fresh source `mu0`.
    pub a: f64,
    /// Weight of the parametric model among generated samples.
    pub b: f64,
    /// Weight of the empirical measure among generated samples.
    pub c: f64,
    pub batch_size: usize,
    pub support: Support,
    pub mu0: ProbVector,
    pub theta0: ProbVector,
    /// Number of generations recorded, the initial one included.
    pub horizon: usize,
    pub master_seed: u64,
    pub source_choice: SourceChoice,
}

impl ExperimentConfig {
    /// A config with `c = 1 - b`, `theta0 = mu0`, horizon 100 and seed 0.
    pub fn new(mu0: ProbVector, batch_size: usize, a: f64, b: f64) -> Result<Self> {
        let cfg = ExperimentConfig {
            a,
            b,
            c: 1.0 - b,
            batch_size,
            support: Support::new(mu0.len())?,
            theta0: mu0.clone(),
            mu0,
            horizon: 100,
            master_seed: 0,
            source_choice: SourceChoice::PerSample,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_theta0(mut self, theta0: ProbVector) -> Self {
        self.theta0 = theta0;
        self
    }

    pub fn k(&self) -> usize {
        self.support.size()
    }

    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.a) {
            return Err(Error::invalid(format!("a must lie in [0, 1], got {}", self.a)));
        }
        if !unit.contains(&self.b) {
            return Err(Error::invalid(format!("b must lie in [0, 1], got {}", self.b)));
        }
        if !unit.contains(&self.c) {
            return Err(Error::invalid(format!("c must lie in [0, 1], got {}", self.c)));
        }
        if (self.b + self.c - 1.0).abs() > MIXTURE_TOLERANCE {
            return Err(Error::invalid(format!(
                "b + c must equal 1, got b + c = {}",
                self.b + self.c
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size N must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        let k = self.k();
        if self.mu0.len() != k {
            return Err(Error::invalid(format!(
                "mu0 has {} weights but K = {k}",
                self.mu0.len()
            )));
        }
        if self.theta0.len() != k {
            return Err(Error::invalid(format!(
                "theta0 has {} weights but K = {k}",
                self.theta0.len()
            )));
        }
        Ok(())
    }

    /// Flat `key = value` text with a fixed key order and 17 significant
    /// digits per float. It parses back to the same config.
    pub fn canonical_text(&self) -> String {
        self.canonical_body(true)
    }

    /// SHA-256 of the canonical text, labels excluded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_body(false).as_bytes()))
    }

    fn canonical_body(&self, with_labels: bool) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "a = {}", fmt_f64(self.a));
        let _ = writeln!(out, "b = {}", fmt_f64(self.b));
        let _ = writeln!(out, "c = {}", fmt_f64(self.c));
        let _ = writeln!(out, "N = {}", self.batch_size);
        let _ = writeln!(out, "K = {}", self.k());
        let _ = writeln!(out, "horizon = {}", self.horizon);
        if self.master_seed <= i64::MAX as u64 {
            let _ = writeln!(out, "master_seed = {}", self.master_seed);
        } else {
            let _ = writeln!(out, "master_seed = \"{}\"", self.master_seed);
        }
        let _ = writeln!(out, "source_choice = \"{}\"", self.source_choice.as_str());
        let _ = writeln!(out, "mu0 = {}", fmt_list(self.mu0.weights()));
        let _ = writeln!(out, "theta0 = {}", fmt_list(self.theta0.weights()));
        if let Some(coords) = self.support.coords() {
            let _ = writeln!(out, "coords = {}", fmt_list(coords));
        }
        if with_labels {
            let labels: Vec<String> = self
                .support
                .labels()
                .iter()
                .map(|l| format!("{l:?}"))
                .collect();
            let _ = writeln!(out, "labels = [{}]", labels.join(", "));
        }
        out
    }
}

/// Scientific notation with 17 significant digits; round-trips every f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{:.16e}", x + 0.0)
}

fn fmt_list(xs: &[f64]) -> String {
    let items: Vec<String> = xs.iter().map(|&x| fmt_f64(x)).collect();
    format!("[{}]", items.join(", "))
}

/// The Markov state `(mu_n, theta_n)` at generation `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationState {
    pub n: usize,
    pub mu: ProbVector,
    pub theta: ProbVector,
}

impl GenerationState {
    pub fn initial(cfg: &ExperimentConfig) -> Self {
        GenerationState {
            n: 0,
            mu: cfg.mu0.clone(),
            theta: cfg.theta0.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceTag {
    Fresh,
    Parametric,
    Empirical,
}

/// One generated batch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchRecord {
    pub samples: Vec<usize>,
    pub source_tags: Vec<SourceTag>,
    /// The generative mixture `b theta + c mu` the batch was drawn against.
    pub nu: ProbVector,
}

impl BatchRecord {
    pub fn parametric_samples(&self) -> Vec<usize> {
        self.samples
            .iter()
            .zip(&self.source_tags)
            .filter(|(_, t)| **t == SourceTag::Parametric)
            .map(|(&x, _)| x)
            .collect()
    }
}

/// Deterministic random stream for `(master_seed, index)`.
///
/// ChaCha8 keyed by `seed_from_u64(master_seed)` with the trajectory index as
/// the stream number, so streams never overlap.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
    master_seed: u64,
    index: u64,
}

impl RngStream {
    pub const POLICY: &'static str = "chacha8: key = seed_from_u64(master_seed), stream = trajectory_index";

    pub fn new(master_seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(index);
        RngStream {
            rng,
            master_seed,
            index,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Inverse-CDF draw. Atoms of zero weight are never returned.
pub fn draw_atom(p: &ProbVector, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in p.weights().iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Supplies the law each source samples from. [`ExactKernel`] is the
/// model itself; other implementations exist to perturb it in tests.
pub trait SamplingKernel: Sync {
    fn source_law<'a>(
        &self,
        tag: SourceTag,
        state: &'a GenerationState,
        cfg: &'a ExperimentConfig,
    ) -> Cow<'a, ProbVector>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExactKernel;

impl SamplingKernel for ExactKernel {
    fn source_law<'a>(
        &self,
        tag: SourceTag,
        state: &'a GenerationState,
        cfg: &'a ExperimentConfig,
    ) -> Cow<'a, ProbVector> {
        match tag {
            SourceTag::Fresh => Cow::Borrowed(&cfg.mu0),
            SourceTag::Parametric => Cow::Borrowed(&state.theta),
            SourceTag::Empirical => Cow::Borrowed(&state.mu),
        }
    }
}

/// `b theta + c mu`.
pub fn generative_mixture(state: &GenerationState, cfg: &ExperimentConfig) -> Result<ProbVector> {
    mix(cfg.b, &state.theta, &state.mu)
}

/// The per-sample law `a mu0 + (1 - a)(b theta + c mu)`.
pub fn effective_sampling_measure(
    state: &GenerationState,
    cfg: &ExperimentConfig,
) -> Result<ProbVector> {
    mix(cfg.a, &cfg.mu0, &generative_mixture(state, cfg)?)
}

/// Empirical frequencies of the parametric sub-batch, or `theta_prev` when
/// the sub-batch is empty. Unbiased for `theta_prev` when the sub-batch is
/// drawn from it.
pub fn fit_theta(parametric_samples: &[usize], theta_prev: &ProbVector) -> Result<ProbVector> {
    if parametric_samples.is_empty() {
        return Ok(theta_prev.clone());
    }
    ProbVector::from_counts(&count_atoms(parametric_samples, theta_prev.len())?)
}

/// True iff `a = 0` and every future sample is almost surely one atom.
pub fn is_absorbed(state: &GenerationState, cfg: &ExperimentConfig) -> bool {
    cfg.a == 0.0
        && effective_sampling_measure(state, cfg)
            .map(|p| p.is_dirac())
            .unwrap_or(false)
}

pub fn step(
    state: &GenerationState,
    cfg: &ExperimentConfig,
    rng: &mut RngStream,
) -> Result<(GenerationState, BatchRecord)> {
    step_with(&ExactKernel, state, cfg, rng)
}

pub fn step_with<K: SamplingKernel + ?Sized>(
    kernel: &K,
    state: &GenerationState,
    cfg: &ExperimentConfig,
    rng: &mut RngStream,
) -> Result<(GenerationState, BatchRecord)> {
    if state.n >= cfg.horizon {
        return Err(Error::precondition(format!(
            "generation {} is at or past the horizon {}",
            state.n, cfg.horizon
        )));
    }
    if state.mu.len() != cfg.k() || state.theta.len() != cfg.k() {
        return Err(Error::invalid("state does not match the config support"));
    }
    let fresh = kernel.source_law(SourceTag::Fresh, state, cfg);
    let parametric = kernel.source_law(SourceTag::Parametric, state, cfg);
    let empirical = kernel.source_law(SourceTag::Empirical, state, cfg);

    let n = cfg.batch_size;
    let mut samples = Vec::with_capacity(n);
    let mut source_tags = Vec::with_capacity(n);
    for _ in 0..n {
        let tag = if rng.uniform() < cfg.a {
            SourceTag::Fresh
        } else if rng.uniform() < cfg.b {
            SourceTag::Parametric
        } else {
            SourceTag::Empirical
        };
        let law = match tag {
            SourceTag::Fresh => &fresh,
            SourceTag::Parametric => &parametric,
            SourceTag::Empirical => &empirical,
        };
        samples.push(draw_atom(law, rng.uniform()));
        source_tags.push(tag);
    }

    let batch = BatchRecord {
        nu: generative_mixture(state, cfg)?,
        samples,
        source_tags,
    };
    let next = GenerationState {
        n: state.n + 1,
        mu: ProbVector::from_counts(&count_atoms(&batch.samples, cfg.k())?)?,
        theta: fit_theta(&batch.parametric_samples(), &state.theta)?,
    };
    Ok((next, batch))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub n: usize,
    pub mu: Vec<f64>,
    pub theta: Vec<f64>,
    /// Support size of the effective sampling measure.
    pub support_size: usize,
    pub collapsed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub config_digest: String,
    pub seed: u64,
    pub trajectory_index: u64,
    pub rows: Vec<TrajectoryRow>,
    pub collapse_time: Option<usize>,
}

/// Iterates the chain from the initial state, calling `observe` on each
/// recorded generation. Stops after the first absorbed generation or at the
/// horizon. Returns the collapse time, if any.
pub(crate) fn simulate<K, F>(
    kernel: &K,
    cfg: &ExperimentConfig,
    trajectory_index: u64,
    mut observe: F,
) -> Result<Option<usize>>
where
    K: SamplingKernel + ?Sized,
    F: FnMut(&GenerationState, &ProbVector, bool),
{
    let mut rng = RngStream::new(cfg.master_seed, trajectory_index);
    let mut state = GenerationState::initial(cfg);
    loop {
        let effective = effective_sampling_measure(&state, cfg)?;
        let absorbed = cfg.a == 0.0 && effective.is_dirac();
        observe(&state, &effective, absorbed);
        if absorbed {
            return Ok(Some(state.n));
        }
        if state.n + 1 >= cfg.horizon {
            return Ok(None);
        }
        state = step_with(kernel, &state, cfg, &mut rng)?.0;
    }
}

pub fn run_trajectory(cfg: &ExperimentConfig, trajectory_index: u64) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let collapse_time = simulate(&ExactKernel, cfg, trajectory_index, |state, eff, absorbed| {
        rows.push(TrajectoryRow {
            n: state.n,
            mu: state.mu.weights().to_vec(),
            theta: state.theta.weights().to_vec(),
            support_size: eff.support_size(),
            collapsed: absorbed,
        })
    })?;
    Ok(TrajectoryRecord {
        config_digest: cfg.digest(),
        seed: cfg.master_seed,
        trajectory_index,
        rows,
        collapse_time,
    })
}

/// Runs trajectories `0..n_runs` on the current rayon pool.
pub fn run_ensemble(cfg: &ExperimentConfig, n_runs: usize) -> Result<EnsembleStats> {
    run_ensemble_with(&ExactKernel, cfg, n_runs)
}

pub fn run_ensemble_with<K: SamplingKernel + ?Sized>(
    kernel: &K,
    cfg: &ExperimentConfig,
    n_runs: usize,
) -> Result<EnsembleStats> {
    cfg.validate()?;
    if n_runs == 0 {
        return Err(Error::invalid("an ensemble needs at least one run"));
    }
    EnsembleAccumulator::check_size(cfg)?;
    let chunks = n_runs.div_ceil(ENSEMBLE_CHUNK);
    let partials: Vec<EnsembleAccumulator> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut acc = EnsembleAccumulator::new(cfg);
            let start = chunk * ENSEMBLE_CHUNK;
            let end = (start + ENSEMBLE_CHUNK).min(n_runs);
            for index in start..end {
                acc.add_trajectory(kernel, cfg, index as u64)?;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = EnsembleAccumulator::new(cfg);
    for part in &partials {
        total.merge(part);
    }
    Ok(total.finish(cfg))
}
