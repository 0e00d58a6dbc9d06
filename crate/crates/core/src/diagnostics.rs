//! Executable checks on the simulator: one-step martingale residuals, the
//! exact mean recursion, Jensen gaps, second-moment monotonicity, and
//! collapse/fixation statistics over ensembles.

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dynamics::{
    simulate, step_with, ExactKernel, ExperimentConfig, GenerationState, RngStream,
    SamplingKernel,
};
use crate::error::{Error, Result};
use crate::measure::{integrate, make_cdc, TestFunction};

/// Two-sided pass band, in standard errors, for statistical checks.
pub const SE_BAND: f64 = 4.0;

/// Minimum replicas accepted by [`martingale_residual`].
pub const MIN_REPLICAS: usize = 100;

const BOOTSTRAP_RESAMPLES: usize = 400;
const BOOTSTRAP_SEED: u64 = 0x4a65_6e73_656e;
const MAX_HISTOGRAM_CELLS: usize = 50_000_000;

/// Mean and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleMean {
    pub mean: f64,
    pub standard_error: f64,
    pub count: usize,
}

impl SampleMean {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return SampleMean {
                mean: f64::NAN,
                standard_error: f64::NAN,
                count: 0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let standard_error = if n > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        SampleMean {
            mean,
            standard_error,
            count: n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordinate {
    Mu,
    Theta,
}

/// Estimate of `E[X' | state] - contract` for one coordinate and test function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub coordinate: Coordinate,
    pub mean_residual: f64,
    pub standard_error: f64,
    pub replicas: usize,
    pub contract_value: f64,
}

impl ResidualReport {
    /// `|mean_residual| <= bands * standard_error`.
    pub fn within(&self, bands: f64) -> bool {
        self.mean_residual.abs() <= bands * self.standard_error
    }
}

/// μ and θ residuals computed from the same replicas.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleCheck {
    pub mu: ResidualReport,
    pub theta: ResidualReport,
}

/// Branches `replicas` one-step copies from `state` (replica `r` uses stream
/// `(cfg.master_seed, r)`) and compares the mean of `mu'(f)` with
/// `effective_sampling_measure(state)(f)`.
pub fn martingale_residual(
    state: &GenerationState,
    cfg: &ExperimentConfig,
    replicas: usize,
    f: &TestFunction,
) -> Result<ResidualReport> {
    Ok(martingale_residuals(state, cfg, replicas, f)?.mu)
}

/// As [`martingale_residual`], plus the θ coordinate checked against `theta(f)`.
pub fn martingale_residuals(
    state: &GenerationState,
    cfg: &ExperimentConfig,
    replicas: usize,
    f: &TestFunction,
) -> Result<MartingaleCheck> {
    martingale_residuals_with(&ExactKernel, state, cfg, replicas, f)
}

/// [`martingale_residuals`] with the batch drawn through `kernel`. The
/// contract values always come from the exact model.
pub fn martingale_residuals_with<K: SamplingKernel + ?Sized>(
    kernel: &K,
    state: &GenerationState,
    cfg: &ExperimentConfig,
    replicas: usize,
    f: &TestFunction,
) -> Result<MartingaleCheck> {
    if replicas < MIN_REPLICAS {
        return Err(Error::invalid(format!(
            "need at least {MIN_REPLICAS} replicas, got {replicas}"
        )));
    }
    cfg.validate()?;
    let mu_target = integrate(
        &crate::dynamics::effective_sampling_measure(state, cfg)?,
        f,
    )?;
    let theta_target = integrate(&state.theta, f)?;
    let residuals: Vec<(f64, f64)> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::new(cfg.master_seed, r);
            let (next, _) = step_with(kernel, state, cfg, &mut rng)?;
            Ok((
                integrate(&next.mu, f)? - mu_target,
                integrate(&next.theta, f)? - theta_target,
            ))
        })
        .collect::<Result<_>>()?;
    let (mu_res, theta_res): (Vec<f64>, Vec<f64>) = residuals.into_iter().unzip();
    let report = |coordinate, values: &[f64], contract_value| {
        let s = SampleMean::of(values);
        ResidualReport {
            coordinate,
            mean_residual: s.mean,
            standard_error: s.standard_error,
            replicas,
            contract_value,
        }
    };
    Ok(MartingaleCheck {
        mu: report(Coordinate::Mu, &mu_res, mu_target),
        theta: report(Coordinate::Theta, &theta_res, theta_target),
    })
}

/// Exact `E[mu_n(f)]` for `n = 0..=horizon`.
///
/// `E[theta_n] = theta0` for every `n`, so the mean follows the affine
/// recursion `m_{n+1} = a mu0(f) + (1 - a)(b theta0(f) + c m_n)` from
/// `m_0 = mu0(f)`. With `b = 0` or `theta0 = mu0` this is
/// `mu0(f) + (1 - a)^n (m_0 - mu0(f))`.
pub fn barycenter_trajectory(
    cfg: &ExperimentConfig,
    f: &TestFunction,
    horizon: usize,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let source = integrate(&cfg.mu0, f)?;
    let model = integrate(&cfg.theta0, f)?;
    let mut out = Vec::with_capacity(horizon + 1);
    let mut m = source;
    out.push(m);
    for _ in 0..horizon {
        m = cfg.a * source + (1.0 - cfg.a) * (cfg.b * model + cfg.c * m);
        out.push(m);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    /// Unbiased sample variance; zero for a single run.
    pub variance: f64,
    pub second_moment: f64,
    pub fourth_moment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationStats {
    pub n: usize,
    /// Runs absorbed at or before this generation.
    pub collapsed: u64,
    pub collapsed_fraction: f64,
    /// Exact `E[mu_n(f_i)]` per singleton indicator.
    pub barycenter: Vec<f64>,
    /// Monte Carlo moments of `mu_n(f_i)` per singleton indicator.
    pub moments: Vec<Moments>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CollapseTimeBin {
    pub time: usize,
    pub count: u64,
}

/// Aggregated ensemble output. Test functions are the singleton indicators
/// of the support, in atom order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub config_digest: String,
    pub master_seed: u64,
    pub n_runs: u64,
    pub horizon: usize,
    pub batch_size: usize,
    pub k: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub generations: Vec<GenerationStats>,
    pub collapse_times: Vec<CollapseTimeBin>,
    pub not_collapsed: u64,
    pub fixation_counts: Vec<u64>,
    /// `[generation][f]` → sorted `(value, runs)`.
    #[serde(skip)]
    histograms: Vec<Vec<Vec<(f64, u64)>>>,
}

impl EnsembleStats {
    pub fn moments(&self, generation: usize, f_index: usize) -> Moments {
        self.generations[generation].moments[f_index]
    }

    pub fn standard_error(&self, generation: usize, f_index: usize) -> f64 {
        (self.moments(generation, f_index).variance / self.n_runs as f64).sqrt()
    }

    /// Distinct values of `mu_n(f_i)` with their run counts.
    pub fn histogram(&self, generation: usize, f_index: usize) -> &[(f64, u64)] {
        &self.histograms[generation][f_index]
    }

    /// Mean and standard error of the collapse time over collapsed runs.
    pub fn mean_collapse_time(&self) -> Option<SampleMean> {
        let count: u64 = self.collapse_times.iter().map(|b| b.count).sum();
        if count == 0 {
            return None;
        }
        let n = count as f64;
        let mean = self
            .collapse_times
            .iter()
            .map(|b| b.time as f64 * b.count as f64)
            .sum::<f64>()
            / n;
        let ss: f64 = self
            .collapse_times
            .iter()
            .map(|b| (b.time as f64 - mean).powi(2) * b.count as f64)
            .sum();
        let standard_error = if count > 1 {
            (ss / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Some(SampleMean {
            mean,
            standard_error,
            count: count as usize,
        })
    }

    fn check_generation(&self, generation: usize, f_index: usize) -> Result<()> {
        if generation >= self.generations.len() {
            return Err(Error::invalid(format!(
                "generation {generation} outside recorded range 0..{}",
                self.generations.len()
            )));
        }
        if f_index >= self.k {
            return Err(Error::invalid(format!(
                "test function {f_index} outside 0..{}",
                self.k
            )));
        }
        Ok(())
    }
}

/// Integer-only partial sums, so merging is exact and order-free.
#[derive(Debug, Clone)]
pub(crate) struct EnsembleAccumulator {
    generations: usize,
    k: usize,
    batch: usize,
    // [(g - 1) * k + i] * (batch + 1) + count, for g >= 1
    counts: Vec<u64>,
    collapse_times: Vec<u64>,
    // [g * k + x]: runs whose batches are all x from generation g on
    dirac_from: Vec<u64>,
    not_collapsed: u64,
    fixation: Vec<u64>,
    runs: u64,
}

impl EnsembleAccumulator {
    pub(crate) fn check_size(cfg: &ExperimentConfig) -> Result<()> {
        let cells = (cfg.horizon - 1)
            .saturating_mul(cfg.k())
            .saturating_mul(cfg.batch_size + 1);
        if cells > MAX_HISTOGRAM_CELLS {
            return Err(Error::ResourceLimit(format!(
                "ensemble histogram needs {cells} cells, limit is {MAX_HISTOGRAM_CELLS}"
            )));
        }
        Ok(())
    }

    pub(crate) fn new(cfg: &ExperimentConfig) -> Self {
        let k = cfg.k();
        EnsembleAccumulator {
            generations: cfg.horizon,
            k,
            batch: cfg.batch_size,
            counts: vec![0; (cfg.horizon - 1) * k * (cfg.batch_size + 1)],
            collapse_times: vec![0; cfg.horizon],
            dirac_from: vec![0; cfg.horizon * k],
            not_collapsed: 0,
            fixation: vec![0; k],
            runs: 0,
        }
    }

    fn slot(&self, generation: usize, atom: usize, count: usize) -> usize {
        ((generation - 1) * self.k + atom) * (self.batch + 1) + count
    }

    pub(crate) fn add_trajectory<K: SamplingKernel + ?Sized>(
        &mut self,
        kernel: &K,
        cfg: &ExperimentConfig,
        index: u64,
    ) -> Result<()> {
        let mut absorbed_atom = None;
        let batch = self.batch as f64;
        let mut slots = Vec::new();
        let collapse = simulate(kernel, cfg, index, |state, effective, absorbed| {
            if state.n >= 1 {
                for (atom, w) in state.mu.weights().iter().enumerate() {
                    slots.push((state.n, atom, (w * batch).round() as usize));
                }
            }
            if absorbed {
                absorbed_atom = effective.dirac_atom();
            }
        })?;
        for (g, atom, count) in slots {
            let s = self.slot(g, atom, count);
            self.counts[s] += 1;
        }
        match (collapse, absorbed_atom) {
            (Some(t), Some(x)) => {
                self.collapse_times[t] += 1;
                self.fixation[x] += 1;
                // every later batch is all x
                let g = (t + 1).max(1);
                if g < self.generations {
                    self.dirac_from[g * self.k + x] += 1;
                }
            }
            _ => self.not_collapsed += 1,
        }
        self.runs += 1;
        Ok(())
    }

    pub(crate) fn merge(&mut self, other: &EnsembleAccumulator) {
        for (x, y) in self.counts.iter_mut().zip(&other.counts) {
            *x += y;
        }
        for (x, y) in self.collapse_times.iter_mut().zip(&other.collapse_times) {
            *x += y;
        }
        for (x, y) in self.dirac_from.iter_mut().zip(&other.dirac_from) {
            *x += y;
        }
        for (x, y) in self.fixation.iter_mut().zip(&other.fixation) {
            *x += y;
        }
        self.not_collapsed += other.not_collapsed;
        self.runs += other.runs;
    }

    pub(crate) fn finish(mut self, cfg: &ExperimentConfig) -> EnsembleStats {
        let runs = self.runs;
        let mut fixed = vec![0u64; self.k];
        for g in 1..self.generations {
            let mut fixed_total = 0;
            for x in 0..self.k {
                fixed[x] += self.dirac_from[g * self.k + x];
                fixed_total += fixed[x];
            }
            for atom in 0..self.k {
                let full = self.slot(g, atom, self.batch);
                let empty = self.slot(g, atom, 0);
                self.counts[full] += fixed[atom];
                self.counts[empty] += fixed_total - fixed[atom];
            }
        }
        let cdc = make_cdc(&cfg.support);
        let barycenters: Vec<Vec<f64>> = cdc
            .iter()
            .map(|f| {
                barycenter_trajectory(cfg, f, self.generations - 1)
                    .expect("config validated before the ensemble ran")
            })
            .collect();

        let mut histograms = Vec::with_capacity(self.generations);
        histograms.push(
            cfg.mu0
                .weights()
                .iter()
                .map(|&w| vec![(w, runs)])
                .collect::<Vec<_>>(),
        );
        for g in 1..self.generations {
            let per_f = (0..self.k)
                .map(|atom| {
                    (0..=self.batch)
                        .filter_map(|c| {
                            let n = self.counts[self.slot(g, atom, c)];
                            (n > 0).then(|| (c as f64 / self.batch as f64, n))
                        })
                        .collect()
                })
                .collect();
            histograms.push(per_f);
        }

        let mut collapsed = 0;
        let generations = histograms
            .iter()
            .enumerate()
            .map(|(g, per_f)| {
                collapsed += self.collapse_times[g];
                GenerationStats {
                    n: g,
                    collapsed,
                    collapsed_fraction: collapsed as f64 / runs as f64,
                    barycenter: barycenters.iter().map(|b| b[g]).collect(),
                    moments: per_f.iter().map(|h| moments_of(h, runs)).collect(),
                }
            })
            .collect();

        EnsembleStats {
            config_digest: cfg.digest(),
            master_seed: cfg.master_seed,
            n_runs: runs,
            horizon: self.generations,
            batch_size: self.batch,
            k: self.k,
            a: cfg.a,
            b: cfg.b,
            c: cfg.c,
            generations,
            collapse_times: self
                .collapse_times
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(time, &count)| CollapseTimeBin { time, count })
                .collect(),
            not_collapsed: self.not_collapsed,
            fixation_counts: self.fixation,
            histograms,
        }
    }
}

fn moments_of(histogram: &[(f64, u64)], runs: u64) -> Moments {
    if let [(v, _)] = histogram {
        // a deterministic generation; keep it exact
        return Moments {
            mean: *v,
            variance: 0.0,
            second_moment: v * v,
            fourth_moment: v.powi(4),
        };
    }
    let n = runs as f64;
    let raw = |p: i32| histogram.iter().map(|(v, c)| v.powi(p) * *c as f64).sum::<f64>() / n;
    let mean = raw(1);
    let second_moment = raw(2);
    let variance = if runs > 1 {
        let ss: f64 = histogram
            .iter()
            .map(|(v, c)| (v - mean).powi(2) * *c as f64)
            .sum();
        ss / (n - 1.0)
    } else {
        0.0
    };
    Moments {
        mean,
        variance,
        second_moment,
        fourth_moment: raw(4),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JensenGap {
    pub generation: usize,
    pub f_index: usize,
    /// Monte Carlo `E[g(mu_n(f))]`.
    pub expected_g: f64,
    /// `g` at the exact mean of `mu_n(f)`.
    pub g_at_barycenter: f64,
    pub gap: f64,
    /// Bootstrap standard error of `expected_g`.
    pub standard_error: f64,
}

/// `E[g(mu_n(f))] - g(E[mu_n(f)])`, nonnegative for convex `g`.
pub fn jensen_gap(
    stats: &EnsembleStats,
    generation: usize,
    f_index: usize,
    g: &dyn Fn(f64) -> f64,
) -> Result<JensenGap> {
    stats.check_generation(generation, f_index)?;
    let histogram = stats.histogram(generation, f_index);
    let n = stats.n_runs as f64;
    let expected_g = histogram.iter().map(|(v, c)| g(*v) * *c as f64).sum::<f64>() / n;
    let g_at_barycenter = g(stats.generations[generation].barycenter[f_index]);

    // multinomial resampling of the histogram cells, via conditional binomials
    let mut rng = RngStream::new(BOOTSTRAP_SEED, generation as u64);
    let means: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let mut remaining = stats.n_runs;
            let mut mass = n;
            let mut acc = 0.0;
            for (v, c) in histogram {
                if remaining == 0 {
                    break;
                }
                let p = (*c as f64 / mass).min(1.0);
                let drawn = Binomial::new(remaining, p)
                    .map(|b| b.sample(&mut rng))
                    .unwrap_or(remaining);
                acc += g(*v) * drawn as f64;
                remaining -= drawn;
                mass -= *c as f64;
            }
            acc / n
        })
        .collect();
    let boot = SampleMean::of(&means);
    let standard_error = boot.standard_error * (BOOTSTRAP_RESAMPLES as f64).sqrt();

    Ok(JensenGap {
        generation,
        f_index,
        expected_g,
        g_at_barycenter,
        gap: expected_g - g_at_barycenter,
        standard_error,
    })
}

/// Per consecutive pair `(n, n + 1)`:
/// `max(0, E[mu_n(f)^2] - E[mu_{n+1}(f)^2] - 4 SE)`, where SE is the standard
/// error of the difference of the two estimates. Only meaningful for the
/// pure resampling regime `a = 0, b = 0`.
pub fn second_moment_monotone(stats: &EnsembleStats, f_index: usize) -> Result<Vec<f64>> {
    if stats.a != 0.0 || stats.b != 0.0 {
        return Err(Error::precondition(format!(
            "second-moment monotonicity needs a = 0 and b = 0, got a = {}, b = {}",
            stats.a, stats.b
        )));
    }
    stats.check_generation(0, f_index)?;
    let n = stats.n_runs as f64;
    let square_var = |m: &Moments| {
        let v = (m.fourth_moment - m.second_moment.powi(2)).max(0.0);
        if stats.n_runs > 1 {
            v * n / (n - 1.0)
        } else {
            0.0
        }
    };
    Ok(stats
        .generations
        .windows(2)
        .map(|w| {
            let (now, next) = (&w[0].moments[f_index], &w[1].moments[f_index]);
            let se = ((square_var(now) + square_var(next)) / n).sqrt();
            (now.second_moment - next.second_moment - SE_BAND * se).max(0.0)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixationReport {
    /// Fraction of collapsed runs absorbed at each atom.
    pub frequencies: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub collapsed: u64,
    pub uncollapsed: u64,
    /// Set when some runs had not collapsed by the horizon.
    pub warning: Option<String>,
}

pub fn fixation_histogram(stats: &EnsembleStats) -> Result<FixationReport> {
    if stats.a != 0.0 {
        return Err(Error::precondition(format!(
            "fixation needs a = 0, got a = {}",
            stats.a
        )));
    }
    let collapsed: u64 = stats.fixation_counts.iter().sum();
    if collapsed == 0 {
        return Err(Error::precondition("no run collapsed before the horizon"));
    }
    let n = collapsed as f64;
    let frequencies: Vec<f64> = stats
        .fixation_counts
        .iter()
        .map(|&c| c as f64 / n)
        .collect();
    let standard_errors = frequencies
        .iter()
        .map(|p| (p * (1.0 - p) / n).sqrt())
        .collect();
    let warning = (stats.not_collapsed > 0).then(|| {
        format!(
            "partial result: {} of {} runs had not collapsed by the horizon",
            stats.not_collapsed, stats.n_runs
        )
    });
    Ok(FixationReport {
        frequencies,
        standard_errors,
        collapsed,
        uncollapsed: stats.not_collapsed,
        warning,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl ChiSquareTest {
    pub fn passes(&self, significance: f64) -> bool {
        self.p_value >= significance
    }
}

/// Pearson goodness-of-fit of observed counts against cell probabilities.
/// Cells of zero probability must be empty; they carry no degree of freedom.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<ChiSquareTest> {
    if observed.len() != probs.len() {
        return Err(Error::invalid(format!(
            "{} observed cells vs {} probabilities",
            observed.len(),
            probs.len()
        )));
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(Error::invalid("no observations"));
    }
    let n = total as f64;
    let mut statistic = 0.0;
    let mut cells = 0usize;
    for (&o, &p) in observed.iter().zip(probs) {
        if p <= 0.0 {
            if o > 0 {
                statistic = f64::INFINITY;
            }
            continue;
        }
        cells += 1;
        let e = n * p;
        statistic += (o as f64 - e).powi(2) / e;
    }
    let dof = cells.saturating_sub(1);
    let p_value = if statistic.is_infinite() {
        0.0
    } else if dof == 0 {
        1.0
    } else {
        ChiSquared::new(dof as f64)
            .map_err(|e| Error::Numerical(e.to_string()))?
            .sf(statistic)
    };
    Ok(ChiSquareTest {
        statistic,
        dof,
        p_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{run_ensemble, run_trajectory};
    use crate::measure::ProbVector;
    use approx::assert_abs_diff_eq;

    fn pv(w: &[f64]) -> ProbVector {
        ProbVector::new(w.to_vec()).unwrap()
    }

    fn wf(mu0: &[f64], n: usize) -> ExperimentConfig {
        ExperimentConfig::new(pv(mu0), n, 0.0, 0.0).unwrap()
    }

    #[test]
    fn residual_exact_zero_at_dirac() {
        let cfg = wf(&[0.5, 0.5], 3);
        let s = GenerationState {
            n: 0,
            mu: pv(&[1.0, 0.0]),
            theta: pv(&[0.5, 0.5]),
        };
        let f = TestFunction::indicator(2, 0).unwrap();
        let r = martingale_residual(&s, &cfg, 200, &f).unwrap();
        assert_eq!(r.mean_residual, 0.0);
        assert_eq!(r.standard_error, 0.0);
        assert!(r.within(SE_BAND));
        assert!(matches!(
            martingale_residual(&s, &cfg, 99, &f),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn residual_under_full_excitation() {
        let cfg = ExperimentConfig::new(pv(&[0.1, 0.6, 0.3]), 5, 1.0, 0.3).unwrap();
        let s = GenerationState {
            n: 0,
            mu: pv(&[1.0, 0.0, 0.0]),
            theta: pv(&[0.0, 0.0, 1.0]),
        };
        let f = TestFunction::new(vec![0.2, 0.9, 0.5]).unwrap();
        let r = martingale_residual(&s, &cfg, 20_000, &f).unwrap();
        assert_abs_diff_eq!(r.contract_value, 0.02 + 0.54 + 0.15, epsilon = 1e-12);
        assert!(r.within(SE_BAND), "{r:?}");
    }

    #[test]
    fn residual_two_atom_resampling() {
        let cfg = wf(&[0.5, 0.5], 2);
        let s = GenerationState::initial(&cfg);
        let f = TestFunction::indicator(2, 0).unwrap();
        let r = martingale_residual(&s, &cfg, 100_000, &f).unwrap();
        // one-step variance p(1 - p)/N = 1/8
        assert_abs_diff_eq!(r.standard_error, (0.125f64 / 1e5).sqrt(), epsilon = 5e-5);
        assert!(r.within(SE_BAND), "{r:?}");
    }

    #[test]
    fn barycenter_examples() {
        let f = TestFunction::indicator(2, 0).unwrap();
        let cfg = ExperimentConfig::new(pv(&[0.3, 0.7]), 4, 1.0, 0.5)
            .unwrap()
            .with_theta0(pv(&[0.9, 0.1]));
        let traj = barycenter_trajectory(&cfg, &f, 5).unwrap();
        assert!(traj.iter().all(|&v| (v - 0.3).abs() < 1e-15));

        let cfg = wf(&[0.3, 0.7], 4);
        assert!(barycenter_trajectory(&cfg, &f, 5)
            .unwrap()
            .iter()
            .all(|&v| v == 0.3));
    }

    #[test]
    fn barycenter_two_term_recursion() {
        // b = 1, theta0 = delta_1, a = 1/2: m_{n+1} = 0.5 mu0(f) + 0.5 theta0(f)
        let f = TestFunction::indicator(2, 0).unwrap();
        let cfg = ExperimentConfig::new(pv(&[1.0, 0.0]), 3, 0.5, 1.0)
            .unwrap()
            .with_theta0(pv(&[0.0, 1.0]));
        let traj = barycenter_trajectory(&cfg, &f, 4).unwrap();
        assert_eq!(traj, vec![1.0, 0.5, 0.5, 0.5, 0.5]);

        // a = 0, b = c = 1/2: m_n = theta0(f) + 2^{-n} (mu0(f) - theta0(f))
        let cfg = ExperimentConfig::new(pv(&[1.0, 0.0]), 3, 0.0, 0.5)
            .unwrap()
            .with_theta0(pv(&[0.0, 1.0]));
        let traj = barycenter_trajectory(&cfg, &f, 6).unwrap();
        for (n, v) in traj.iter().enumerate() {
            assert_abs_diff_eq!(*v, 0.5f64.powi(n as i32), epsilon = 1e-15);
        }
    }

    #[test]
    fn singleton_ensemble_matches_trajectory() {
        let cfg = ExperimentConfig::new(pv(&[0.2, 0.3, 0.5]), 4, 0.2, 0.5)
            .unwrap()
            .with_horizon(15)
            .with_seed(3);
        let stats = run_ensemble(&cfg, 1).unwrap();
        let rec = run_trajectory(&cfg, 0).unwrap();
        for (row, gen) in rec.rows.iter().zip(&stats.generations) {
            for (i, m) in gen.moments.iter().enumerate() {
                assert_abs_diff_eq!(m.mean, row.mu[i], epsilon = 1e-15);
                assert_eq!(m.variance, 0.0);
            }
        }
        assert_eq!(stats.not_collapsed, 1);
    }

    #[test]
    fn ensemble_invariants() {
        let cfg = wf(&[0.2, 0.3, 0.5], 5).with_horizon(60).with_seed(12);
        let stats = run_ensemble(&cfg, 3000).unwrap();
        let mass: u64 = stats.collapse_times.iter().map(|b| b.count).sum::<u64>() + stats.not_collapsed;
        assert_eq!(mass, 3000);
        for gen in &stats.generations {
            for m in &gen.moments {
                assert!(m.second_moment >= m.mean * m.mean - 1e-9);
            }
        }
        let collapsed: Vec<u64> = stats.generations.iter().map(|g| g.collapsed).collect();
        assert!(collapsed.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn ensemble_mean_tracks_barycenter() {
        let cfg = ExperimentConfig::new(pv(&[0.7, 0.3]), 6, 0.3, 0.6)
            .unwrap()
            .with_theta0(pv(&[0.1, 0.9]))
            .with_horizon(12)
            .with_seed(77);
        let stats = run_ensemble(&cfg, 20_000).unwrap();
        for gen in &stats.generations[1..] {
            let m = gen.moments[0];
            let se = (m.variance / 20_000.0).sqrt();
            assert!(
                (m.mean - gen.barycenter[0]).abs() <= SE_BAND * se,
                "n = {}: {} vs {}",
                gen.n,
                m.mean,
                gen.barycenter[0]
            );
        }
        // the two-term recursion moves away from mu0 here
        assert!((stats.generations[1].barycenter[0] - 0.7).abs() > 0.1);
    }

    #[test]
    fn jensen_examples() {
        let cfg = wf(&[0.5, 0.5], 2).with_horizon(21).with_seed(5);
        let stats = run_ensemble(&cfg, 100_000).unwrap();
        let square = |x: f64| x * x;
        let gap1 = jensen_gap(&stats, 1, 0, &square).unwrap();
        // E[mu_1(f)^2] = 1/4 + 1/2 * 1/4 = 3/8 by enumeration; g(1/2) = 1/4
        assert!((gap1.gap - 0.125).abs() <= SE_BAND * gap1.standard_error + 1e-3, "{gap1:?}");
        assert_eq!(gap1.g_at_barycenter, 0.25);
        for n in 0..21 {
            let j = jensen_gap(&stats, n, 0, &square).unwrap();
            assert!(j.gap >= -SE_BAND * j.standard_error);
            let id = jensen_gap(&stats, n, 1, &|x| x).unwrap();
            assert!(id.gap.abs() <= SE_BAND * id.standard_error + 1e-12);
        }
        let g0 = jensen_gap(&stats, 0, 0, &square).unwrap();
        assert_eq!(g0.gap, 0.0);
        assert_eq!(g0.standard_error, 0.0);
        assert!(jensen_gap(&stats, 21, 0, &square).is_err());
    }

    #[test]
    fn second_moment_examples() {
        let cfg = wf(&[0.5, 0.5], 2).with_horizon(12).with_seed(8);
        let stats = run_ensemble(&cfg, 50_000).unwrap();
        assert!(second_moment_monotone(&stats, 0).unwrap().iter().all(|&v| v == 0.0));
        // 1/4, 3/8, 7/16, ... = 1/2 - 2^{-(n+2)}
        for gen in &stats.generations {
            let exact = 0.5 - 0.5f64.powi(gen.n as i32 + 2);
            let m = gen.moments[0];
            let se = ((m.fourth_moment - m.second_moment.powi(2)).max(0.0) / 50_000.0).sqrt();
            assert!((m.second_moment - exact).abs() <= SE_BAND * se + 1e-12);
        }

        let dirac = wf(&[0.0, 1.0], 2).with_horizon(5);
        let stats = run_ensemble(&dirac, 10).unwrap();
        assert_eq!(second_moment_monotone(&stats, 1).unwrap(), vec![0.0; 4]);

        let excited = ExperimentConfig::new(pv(&[0.5, 0.5]), 2, 0.1, 0.0)
            .unwrap()
            .with_horizon(5);
        let stats = run_ensemble(&excited, 10).unwrap();
        assert!(matches!(
            second_moment_monotone(&stats, 0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn fixation_examples() {
        let stats = run_ensemble(&wf(&[0.0, 1.0, 0.0], 3).with_horizon(3), 20).unwrap();
        let r = fixation_histogram(&stats).unwrap();
        assert_eq!(r.frequencies, vec![0.0, 1.0, 0.0]);
        assert!(r.warning.is_none());

        let stats = run_ensemble(&wf(&[0.5, 0.5], 2).with_horizon(200).with_seed(2), 50_000).unwrap();
        let r = fixation_histogram(&stats).unwrap();
        assert!((r.frequencies[0] - 0.5).abs() <= 3.0 * r.standard_errors[0]);

        let stats = run_ensemble(&wf(&[0.2, 0.3, 0.5], 10).with_horizon(400).with_seed(6), 20_000).unwrap();
        let r = fixation_histogram(&stats).unwrap();
        for (p, (f, se)) in [0.2, 0.3, 0.5].iter().zip(r.frequencies.iter().zip(&r.standard_errors)) {
            assert!((f - p).abs() <= 3.0 * se, "{r:?}");
        }

        // a short horizon leaves runs uncollapsed
        let stats = run_ensemble(&wf(&[0.5, 0.5], 20).with_horizon(3), 200).unwrap();
        let r = fixation_histogram(&stats);
        if let Ok(r) = r {
            assert!(r.warning.unwrap().contains("had not collapsed"));
        }
    }

    #[test]
    fn no_absorption_under_excitation() {
        let cfg = ExperimentConfig::new(pv(&[0.5, 0.5]), 3, 0.05, 0.5)
            .unwrap()
            .with_horizon(200);
        let stats = run_ensemble(&cfg, 500).unwrap();
        assert_eq!(stats.not_collapsed, 500);
        assert!(fixation_histogram(&stats).is_err());
    }

    #[test]
    fn chi_square_examples() {
        let t = chi_square_gof(&[25, 50, 25], &[0.25, 0.5, 0.25]).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.dof, 2);
        assert_abs_diff_eq!(t.p_value, 1.0, epsilon = 1e-12);
        // df = 2 survival is exp(-x/2)
        let t = chi_square_gof(&[30, 40, 30], &[0.25, 0.5, 0.25]).unwrap();
        assert_abs_diff_eq!(t.statistic, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.p_value, (-2.0f64).exp(), epsilon = 1e-9);
        let t = chi_square_gof(&[1, 0], &[0.0, 1.0]).unwrap();
        assert_eq!(t.p_value, 0.0);
        assert!(chi_square_gof(&[1], &[0.5, 0.5]).is_err());
    }
}
