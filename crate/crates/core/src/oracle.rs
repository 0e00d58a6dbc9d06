//! Exact ground truth for small instances of the `b = 0` chain.
//!
//! Without the parametric channel the state is the batch composition alone:
//! next counts ~ Multinomial(N, a mu0 + (1 - a) counts / N). The chain is
//! enumerated over all compositions of N into K parts and analysed with
//! dense linear algebra.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::ExperimentConfig;
use crate::error::{Error, Result};
use crate::measure::{integrate, ProbVector, Support, TestFunction};

/// Maximum number of compositions the oracle will enumerate.
pub const MAX_STATES: usize = 200_000;

/// Maximum dense transition-matrix entries (states squared).
pub const MAX_MATRIX_ENTRIES: usize = 16_000_000;

/// Row-sum tolerance for the transition matrix.
pub const ROW_SUM_TOLERANCE: f64 = 1e-10;

/// Residual bound `||Ax - b||_inf` accepted from the linear solvers.
pub const SOLVE_RESIDUAL_TOLERANCE: f64 = 1e-9;

/// Above this many states [`exact_mean_trajectory`] switches from chain
/// powers to the closed form.
const MEAN_POWER_STATE_LIMIT: usize = 2_000;

/// Per-atom sample counts of one batch.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct CountComposition(Vec<u64>);

impl CountComposition {
    pub fn new(counts: Vec<u64>, batch_size: u64) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total != batch_size {
            return Err(Error::invalid(format!(
                "counts sum to {total}, expected {batch_size}"
            )));
        }
        Ok(CountComposition(counts))
    }

    pub fn counts(&self) -> &[u64] {
        &self.0
    }

    pub fn frequencies(&self) -> ProbVector {
        ProbVector::from_counts(&self.0).expect("composition of a positive batch")
    }
}

/// Number of compositions of `n` into `k` parts, `C(n + k - 1, k - 1)`,
/// saturating at `u128::MAX`.
pub fn composition_count(n: usize, k: usize) -> u128 {
    let (n, r) = ((n + k - 1) as u128, (k - 1) as u128);
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        // exact: acc * (n - i) is divisible by (i + 1)
        acc = match acc.checked_mul(n - i) {
            Some(x) => x / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// All compositions of `n` into `k` parts, in descending lexicographic order.
pub fn compositions(n: usize, k: usize) -> Vec<CountComposition> {
    fn fill(pos: usize, remaining: u64, cur: &mut Vec<u64>, out: &mut Vec<CountComposition>) {
        if pos + 1 == cur.len() {
            cur[pos] = remaining;
            out.push(CountComposition(cur.clone()));
            return;
        }
        for c in (0..=remaining).rev() {
            cur[pos] = c;
            fill(pos + 1, remaining - c, cur, out);
        }
    }
    let mut out = Vec::new();
    fill(0, n as u64, &mut vec![0; k], &mut out);
    out
}

/// The enumerated `b = 0` count chain.
#[derive(Debug, Clone)]
pub struct OracleChain {
    batch_size: usize,
    a: f64,
    mu0: ProbVector,
    states: Vec<CountComposition>,
    index: HashMap<CountComposition, usize>,
    // row-major, states x states
    matrix: Vec<f64>,
    absorbing: Vec<usize>,
    ln_factorial: Vec<f64>,
}

/// Builds the exact chain for batch size `n` on `s`.
pub fn build_chain(n: usize, s: &Support, a: f64, mu0: &ProbVector) -> Result<OracleChain> {
    if n == 0 {
        return Err(Error::invalid("batch size N must be at least 1"));
    }
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::invalid(format!("a must lie in [0, 1], got {a}")));
    }
    if mu0.len() != s.size() {
        return Err(Error::invalid(format!(
            "mu0 has {} weights but K = {}",
            mu0.len(),
            s.size()
        )));
    }
    let count = composition_count(n, s.size());
    if count > MAX_STATES as u128 {
        return Err(Error::ResourceLimit(format!(
            "{count} compositions exceed the oracle limit of {MAX_STATES}"
        )));
    }
    let size = count as usize;
    if size.saturating_mul(size) > MAX_MATRIX_ENTRIES {
        return Err(Error::ResourceLimit(format!(
            "a dense {size} x {size} transition matrix exceeds {MAX_MATRIX_ENTRIES} entries"
        )));
    }

    let states = compositions(n, s.size());
    let index = states
        .iter()
        .enumerate()
        .map(|(i, c)| (c.clone(), i))
        .collect();
    let mut ln_factorial = vec![0.0; n + 1];
    for i in 1..=n {
        ln_factorial[i] = ln_factorial[i - 1] + (i as f64).ln();
    }
    let mut chain = OracleChain {
        batch_size: n,
        a,
        mu0: mu0.clone(),
        states,
        index,
        matrix: Vec::new(),
        absorbing: Vec::new(),
        ln_factorial,
    };

    let rows: Vec<Vec<f64>> = chain
        .states
        .par_iter()
        .map(|state| chain.row_from(&chain.sampling_law(state)))
        .collect();
    let size = chain.states.len();
    let mut matrix = Vec::with_capacity(size * size);
    let mut absorbing = Vec::new();
    for (i, mut row) in rows.into_iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::Numerical(format!(
                "transition row {i} sums to {sum}"
            )));
        }
        if row[i] >= 1.0 - ROW_SUM_TOLERANCE {
            row.iter_mut().for_each(|p| *p = 0.0);
            row[i] = 1.0;
            absorbing.push(i);
        }
        matrix.extend(row);
    }
    chain.matrix = matrix;
    chain.absorbing = absorbing;
    Ok(chain)
}

impl OracleChain {
    /// Requires `b = 0`; the θ coordinate is then inert.
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.b != 0.0 {
            return Err(Error::Unsupported(format!(
                "the exact oracle covers b = 0 only, got b = {}",
                cfg.b
            )));
        }
        build_chain(cfg.batch_size, &cfg.support, cfg.a, &cfg.mu0)
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[CountComposition] {
        &self.states
    }

    pub fn state_index(&self, counts: &[u64]) -> Option<usize> {
        self.index.get(&CountComposition(counts.to_vec())).copied()
    }

    pub fn absorbing(&self) -> &[usize] {
        &self.absorbing
    }

    pub fn is_absorbing(&self, state: usize) -> bool {
        self.absorbing.binary_search(&state).is_ok()
    }

    pub fn probability(&self, from: usize, to: usize) -> f64 {
        self.matrix[from * self.len() + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        let n = self.len();
        &self.matrix[from * n..(from + 1) * n]
    }

    /// `mu(f)` at a composition.
    pub fn state_value(&self, state: usize, f: &TestFunction) -> Result<f64> {
        integrate(&self.states[state].frequencies(), f)
    }

    fn sampling_law(&self, state: &CountComposition) -> Vec<f64> {
        let n = self.batch_size as f64;
        self.mu0
            .weights()
            .iter()
            .zip(state.counts())
            .map(|(&m, &c)| self.a * m + (1.0 - self.a) * (c as f64 / n))
            .collect()
    }

    /// Multinomial(N, p) probabilities over the state list.
    fn row_from(&self, p: &[f64]) -> Vec<f64> {
        let ln_n = self.ln_factorial[self.batch_size];
        self.states
            .iter()
            .map(|target| {
                let mut ln = ln_n;
                for (&k, &pi) in target.counts().iter().zip(p) {
                    if k == 0 {
                        continue;
                    }
                    if pi <= 0.0 {
                        return 0.0;
                    }
                    ln += k as f64 * pi.ln() - self.ln_factorial[k as usize];
                }
                ln.exp()
            })
            .collect()
    }

    /// Law of the first batch composition when the batch is drawn i.i.d.
    /// from `p`, e.g. an initial measure off the composition lattice.
    pub fn transitions_from(&self, p: &ProbVector) -> Result<Vec<f64>> {
        if p.len() != self.mu0.len() {
            return Err(Error::invalid("measure does not match the chain support"));
        }
        Ok(self.row_from(p.weights()))
    }

    /// Law of the composition after one generation starting from measure `mu`
    /// (`mu` plays the role of the current empirical measure).
    pub fn step_from_measure(&self, mu: &ProbVector) -> Result<Vec<f64>> {
        if mu.len() != self.mu0.len() {
            return Err(Error::invalid("measure does not match the chain support"));
        }
        let law: Vec<f64> = self
            .mu0
            .weights()
            .iter()
            .zip(mu.weights())
            .map(|(&m, &w)| self.a * m + (1.0 - self.a) * w)
            .collect();
        Ok(self.row_from(&law))
    }

    /// `dist * P`.
    pub fn propagate(&self, dist: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        for (i, &w) in dist.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(self.row(i)) {
                *o += w * p;
            }
        }
        out
    }

    fn dense(&self, rows: &[usize], cols: &[usize], identity_minus: bool) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |r, c| {
            let p = self.probability(rows[r], cols[c]);
            if identity_minus {
                (if rows[r] == cols[c] { 1.0 } else { 0.0 }) - p
            } else {
                p
            }
        })
    }

    fn transient(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_absorbing(i)).collect()
    }

    fn check_absorbing(&self) -> Result<Vec<usize>> {
        if self.absorbing.is_empty() {
            return Err(Error::precondition(
                "the chain has no absorbing states (a > 0 with full-support mu0?)",
            ));
        }
        let transient = self.transient();
        // every transient state must reach an absorbing one
        let n = self.len();
        let mut reaches = vec![false; n];
        let mut stack: Vec<usize> = self.absorbing.clone();
        for &i in &stack {
            reaches[i] = true;
        }
        while let Some(j) = stack.pop() {
            for i in 0..n {
                if !reaches[i] && self.probability(i, j) > 0.0 {
                    reaches[i] = true;
                    stack.push(i);
                }
            }
        }
        let trapped = transient.iter().filter(|&&i| !reaches[i]).count();
        if trapped > 0 {
            return Err(Error::Numerical(format!(
                "singular absorption system: {trapped} of {} transient states cannot reach an absorbing state",
                transient.len()
            )));
        }
        Ok(transient)
    }
}

fn solve_checked(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let x = a
        .clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Numerical(format!("{what}: singular system")))?;
    let residual = (a * &x - b).amax();
    if residual > SOLVE_RESIDUAL_TOLERANCE {
        return Err(Error::Numerical(format!(
            "{what}: residual {residual:e} exceeds {SOLVE_RESIDUAL_TOLERANCE:e}"
        )));
    }
    Ok(x)
}

/// Absorption probabilities for every state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbsorptionProbs {
    /// Column order of `probs`.
    pub absorbing: Vec<usize>,
    pub transient: Vec<usize>,
    /// `probs[state][j]`: probability of ending in `absorbing[j]`.
    pub probs: Vec<Vec<f64>>,
}

impl AbsorptionProbs {
    pub fn from_state(&self, state: usize) -> &[f64] {
        &self.probs[state]
    }

    /// Averages over the first-step law from an arbitrary initial measure.
    pub fn from_measure(&self, chain: &OracleChain, p: &ProbVector) -> Result<Vec<f64>> {
        let first = chain.step_from_measure(p)?;
        let mut out = vec![0.0; self.absorbing.len()];
        for (s, w) in first.iter().enumerate() {
            for (o, x) in out.iter_mut().zip(&self.probs[s]) {
                *o += w * x;
            }
        }
        Ok(out)
    }
}

/// Solves `(I - Q) B = R` over the transient states.
pub fn absorption_probs(chain: &OracleChain) -> Result<AbsorptionProbs> {
    let transient = chain.check_absorbing()?;
    let absorbing = chain.absorbing.clone();
    let mut probs = vec![vec![0.0; absorbing.len()]; chain.len()];
    for (j, &s) in absorbing.iter().enumerate() {
        probs[s][j] = 1.0;
    }
    if !transient.is_empty() {
        let lhs = chain.dense(&transient, &transient, true);
        let rhs = chain.dense(&transient, &absorbing, false);
        let x = solve_checked(&lhs, &rhs, "absorption probabilities")?;
        for (r, &s) in transient.iter().enumerate() {
            probs[s] = x.row(r).iter().copied().collect();
        }
    }
    Ok(AbsorptionProbs {
        absorbing,
        transient,
        probs,
    })
}

/// Expected generations to absorption from every state; zero at absorbing ones.
pub fn absorption_times(chain: &OracleChain) -> Result<Vec<f64>> {
    let transient = chain.check_absorbing()?;
    let mut times = vec![0.0; chain.len()];
    if !transient.is_empty() {
        let lhs = chain.dense(&transient, &transient, true);
        let ones = DMatrix::from_element(transient.len(), 1, 1.0);
        let x = solve_checked(&lhs, &ones, "absorption times")?;
        for (r, &s) in transient.iter().enumerate() {
            times[s] = x[(r, 0)];
        }
    }
    Ok(times)
}

/// `P(absorbed by generation n)` for `n = 0..=horizon`, starting from the
/// composition law `start`.
pub fn absorption_cdf(chain: &OracleChain, start: &[f64], horizon: usize) -> Vec<f64> {
    let mut dist = start.to_vec();
    let mut out = Vec::with_capacity(horizon + 1);
    for n in 0..=horizon {
        out.push(chain.absorbing.iter().map(|&s| dist[s]).sum());
        if n < horizon {
            dist = chain.propagate(&dist);
        }
    }
    out
}

/// Expected collapse time of a run whose initial empirical measure is `mu`
/// (generation 0), given the per-state times from [`absorption_times`].
pub fn expected_collapse_time_from(chain: &OracleChain, times: &[f64], mu: &ProbVector) -> Result<f64> {
    if chain.a == 0.0 && mu.is_dirac() {
        return Ok(0.0);
    }
    let first = chain.step_from_measure(mu)?;
    Ok(1.0 + first.iter().zip(times).map(|(p, t)| p * t).sum::<f64>())
}

/// `P(collapsed by generation n)`, `n = 0..=horizon`, for a run whose
/// initial empirical measure is `mu`.
pub fn collapse_cdf_from(chain: &OracleChain, mu: &ProbVector, horizon: usize) -> Result<Vec<f64>> {
    if chain.a == 0.0 && mu.is_dirac() {
        return Ok(vec![1.0; horizon + 1]);
    }
    let mut out = vec![0.0];
    if horizon > 0 {
        let first = chain.step_from_measure(mu)?;
        out.extend(absorption_cdf(chain, &first, horizon - 1));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryReport {
    /// The stationary law; when it is not unique, the first extreme point.
    pub distribution: Vec<f64>,
    /// `sum_s pi(s) counts(s) / N`.
    pub barycenter: Vec<f64>,
    pub unique: bool,
    /// One stationary law per closed communicating class.
    pub extreme_points: Vec<Vec<f64>>,
    pub extreme_barycenters: Vec<Vec<f64>>,
    pub warning: Option<String>,
}

impl StationaryReport {
    /// Mean and variance of `mu(f)` under the stationary law.
    pub fn moments(&self, chain: &OracleChain, f: &TestFunction) -> Result<(f64, f64)> {
        let mut mean = 0.0;
        let mut second = 0.0;
        for (s, &p) in self.distribution.iter().enumerate() {
            let v = chain.state_value(s, f)?;
            mean += p * v;
            second += p * v * v;
        }
        Ok((mean, second - mean * mean))
    }
}

/// Solves `pi P = pi`, `sum pi = 1` on every closed class.
pub fn stationary_distribution(chain: &OracleChain) -> Result<StationaryReport> {
    if chain.a <= 0.0 {
        return Err(Error::precondition(
            "stationary analysis needs a > 0; with a = 0 use the absorption solvers",
        ));
    }
    let n = chain.len();
    let classes = closed_classes(chain);
    let mut extreme_points = Vec::with_capacity(classes.len());
    for class in &classes {
        let m = class.len();
        let p = chain.dense(class, class, false);
        let mut lhs = p.transpose() - DMatrix::identity(m, m);
        lhs.row_mut(m - 1).fill(1.0);
        let mut rhs = DVector::zeros(m);
        rhs[m - 1] = 1.0;
        let rhs = DMatrix::from_column_slice(m, 1, rhs.as_slice());
        let pi_c = solve_checked(&lhs, &rhs, "stationary distribution")?;
        let mut pi = vec![0.0; n];
        for (r, &s) in class.iter().enumerate() {
            pi[s] = pi_c[(r, 0)].max(0.0);
        }
        let balance = chain
            .propagate(&pi)
            .iter()
            .zip(&pi)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        if balance > SOLVE_RESIDUAL_TOLERANCE {
            return Err(Error::Numerical(format!(
                "stationary balance residual {balance:e}"
            )));
        }
        extreme_points.push(pi);
    }
    let extreme_barycenters: Vec<Vec<f64>> = extreme_points
        .iter()
        .map(|pi| barycenter_of(chain, pi))
        .collect();
    let unique = extreme_points.len() == 1;
    let warning = (!unique).then(|| {
        format!(
            "reducible chain: {} closed classes, stationary law is not unique",
            extreme_points.len()
        )
    });
    Ok(StationaryReport {
        distribution: extreme_points[0].clone(),
        barycenter: extreme_barycenters[0].clone(),
        unique,
        extreme_points,
        extreme_barycenters,
        warning,
    })
}

fn barycenter_of(chain: &OracleChain, pi: &[f64]) -> Vec<f64> {
    let k = chain.mu0.len();
    let n = chain.batch_size as f64;
    let mut out = vec![0.0; k];
    for (s, &p) in pi.iter().enumerate() {
        for (o, &c) in out.iter_mut().zip(chain.states[s].counts()) {
            *o += p * c as f64 / n;
        }
    }
    out
}

/// Strongly connected components of the support graph with no exit.
fn closed_classes(chain: &OracleChain) -> Vec<Vec<usize>> {
    let n = chain.len();
    let edge = |i: usize, j: usize| chain.probability(i, j) > 0.0;

    // Kosaraju: finishing order on the graph, then sweeps on the transpose.
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for root in 0..n {
        if visited[root] {
            continue;
        }
        visited[root] = true;
        let mut stack = vec![(root, 0usize)];
        while let Some((v, next)) = stack.last_mut() {
            let v = *v;
            match (*next..n).find(|&w| !visited[w] && edge(v, w)) {
                Some(w) => {
                    *next = w + 1;
                    visited[w] = true;
                    stack.push((w, 0));
                }
                None => {
                    order.push(v);
                    stack.pop();
                }
            }
        }
    }
    let mut component = vec![usize::MAX; n];
    let mut components: Vec<Vec<usize>> = Vec::new();
    for &root in order.iter().rev() {
        if component[root] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut members = vec![root];
        component[root] = id;
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            for w in 0..n {
                if component[w] == usize::MAX && edge(w, v) {
                    component[w] = id;
                    members.push(w);
                    stack.push(w);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }
    let mut closed: Vec<Vec<usize>> = components
        .into_iter()
        .enumerate()
        .filter(|(id, members)| {
            members
                .iter()
                .all(|&i| (0..n).all(|j| !edge(i, j) || component[j] == *id))
        })
        .map(|(_, m)| m)
        .collect();
    closed.sort();
    closed
}

/// Exact `E[mu_n(f)]` for `n = 0..=horizon`, computed independently of
/// [`crate::diagnostics::barycenter_trajectory`]: by powers of the count
/// chain when `b = 0` and the chain is small, otherwise by the geometric
/// closed form of the mean recursion.
pub fn exact_mean_trajectory(
    cfg: &ExperimentConfig,
    f: &TestFunction,
    horizon: usize,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let m0 = integrate(&cfg.mu0, f)?;
    if cfg.b == 0.0 && composition_count(cfg.batch_size, cfg.k()) <= MEAN_POWER_STATE_LIMIT as u128
    {
        let chain = OracleChain::from_config(cfg)?;
        let values: Vec<f64> = (0..chain.len())
            .map(|s| chain.state_value(s, f))
            .collect::<Result<_>>()?;
        let mut out = vec![m0];
        let mut dist = chain.step_from_measure(&cfg.mu0)?;
        for n in 1..=horizon {
            out.push(dist.iter().zip(&values).map(|(p, v)| p * v).sum());
            if n < horizon {
                dist = chain.propagate(&dist);
            }
        }
        return Ok(out);
    }
    let source = m0;
    let model = integrate(&cfg.theta0, f)?;
    let rate = cfg.c * (1.0 - cfg.a);
    let out = if rate >= 1.0 {
        vec![m0; horizon + 1]
    } else {
        let limit = (cfg.a * source + (1.0 - cfg.a) * cfg.b * model) / (1.0 - rate);
        (0..=horizon)
            .map(|n| limit + rate.powi(n as i32) * (m0 - limit))
            .collect()
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::barycenter_trajectory;
    use approx::assert_abs_diff_eq;

    fn pv(w: &[f64]) -> ProbVector {
        ProbVector::new(w.to_vec()).unwrap()
    }

    fn chain(n: usize, k: usize, a: f64, mu0: &[f64]) -> OracleChain {
        build_chain(n, &Support::new(k).unwrap(), a, &pv(mu0)).unwrap()
    }

    #[test]
    fn composition_enumeration() {
        let c = compositions(2, 2);
        let counts: Vec<&[u64]> = c.iter().map(|c| c.counts()).collect();
        assert_eq!(counts, vec![&[2, 0][..], &[1, 1], &[0, 2]]);
        assert_eq!(compositions(5, 3).len(), 21);
        assert_eq!(composition_count(5, 3), 21);
        assert_eq!(composition_count(10, 1), 1);
        assert_eq!(composition_count(100, 4), 176_851);
        assert_eq!(composition_count(10_000, 200), u128::MAX);
        assert!(CountComposition::new(vec![1, 1], 3).is_err());
    }

    #[test]
    fn two_atom_rows() {
        let ch = chain(2, 2, 0.0, &[0.5, 0.5]);
        let mid = ch.state_index(&[1, 1]).unwrap();
        assert_eq!(mid, 1);
        for (p, e) in ch.row(mid).iter().zip([0.25, 0.5, 0.25]) {
            assert_abs_diff_eq!(*p, e, epsilon = 1e-15);
        }
        assert_eq!(ch.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(ch.absorbing(), &[0, 2]);

        // from (0, 2) with a = 1/2, mu0 uniform, atom 0 has p = 1/4
        let ch = chain(2, 2, 0.5, &[0.5, 0.5]);
        for (p, e) in ch.row(2).iter().zip([1.0 / 16.0, 6.0 / 16.0, 9.0 / 16.0]) {
            assert_abs_diff_eq!(*p, e, epsilon = 1e-15);
        }
        assert!(ch.absorbing().is_empty());
    }

    #[test]
    fn rows_are_stochastic() {
        for (n, k, a) in [(7, 3, 0.0), (10, 2, 0.3), (4, 4, 1.0), (12, 3, 0.05)] {
            let mu0 = ProbVector::uniform(k).unwrap();
            let ch = build_chain(n, &Support::new(k).unwrap(), a, &mu0).unwrap();
            for i in 0..ch.len() {
                let row = ch.row(i);
                assert!(row.iter().all(|&p| p >= 0.0));
                assert!((row.iter().sum::<f64>() - 1.0).abs() <= ROW_SUM_TOLERANCE);
            }
        }
    }

    #[test]
    fn guards() {
        let s = Support::new(4).unwrap();
        let mu0 = ProbVector::uniform(4).unwrap();
        assert!(matches!(
            build_chain(200, &s, 0.0, &mu0),
            Err(Error::ResourceLimit(_))
        ));
        // within the composition guard but too large for a dense matrix
        assert!(matches!(
            build_chain(60, &s, 0.0, &mu0),
            Err(Error::ResourceLimit(_))
        ));
        let cfg = ExperimentConfig::new(pv(&[0.5, 0.5]), 2, 0.0, 0.5).unwrap();
        assert!(matches!(
            OracleChain::from_config(&cfg),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn absorption_two_atoms() {
        let ch = chain(2, 2, 0.0, &[0.5, 0.5]);
        let probs = absorption_probs(&ch).unwrap();
        assert_eq!(probs.transient, vec![1]);
        let mid = probs.from_state(1);
        assert_abs_diff_eq!(mid[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(mid[1], 0.5, epsilon = 1e-12);
        assert_eq!(probs.from_state(0), &[1.0, 0.0]);

        let t = absorption_times(&ch).unwrap();
        // t = 1 + t / 2
        assert_abs_diff_eq!(t[1], 2.0, epsilon = 1e-12);
        assert_eq!(t[0], 0.0);

        let start = ch.step_from_measure(&pv(&[0.5, 0.5])).unwrap();
        // starting state (1,1) is the uniform measure itself
        let mut at_mid = vec![0.0; 3];
        at_mid[1] = 1.0;
        let cdf = absorption_cdf(&ch, &at_mid, 10);
        for (n, v) in cdf.iter().enumerate() {
            assert_abs_diff_eq!(*v, 1.0 - 0.5f64.powi(n as i32), epsilon = 1e-12);
        }
        let cdf1 = absorption_cdf(&ch, &start, 3);
        assert_abs_diff_eq!(cdf1[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn absorption_equals_frequencies() {
        for k in 2..=3 {
            for n in 1..=10 {
                let mu0 = ProbVector::uniform(k).unwrap();
                let ch = build_chain(n, &Support::new(k).unwrap(), 0.0, &mu0).unwrap();
                let probs = absorption_probs(&ch).unwrap();
                for (s, state) in ch.states().iter().enumerate() {
                    let freq = state.frequencies();
                    for (j, &abs) in probs.absorbing.iter().enumerate() {
                        let atom = ch.states()[abs].counts().iter().position(|&c| c > 0).unwrap();
                        assert!(
                            (probs.from_state(s)[j] - freq.get(atom)).abs() <= 1e-9,
                            "n={n} k={k} state={state:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn absorption_from_off_lattice_start() {
        let ch = chain(5, 3, 0.0, &[0.2, 0.3, 0.5]);
        let probs = absorption_probs(&ch).unwrap();
        let from = probs.from_measure(&ch, &pv(&[0.2, 0.3, 0.5])).unwrap();
        for (x, e) in from.iter().zip([0.2, 0.3, 0.5]) {
            assert_abs_diff_eq!(*x, e, epsilon = 1e-9);
        }
    }

    #[test]
    fn collapse_from_initial_measure() {
        let ch = chain(2, 2, 0.0, &[0.5, 0.5]);
        let times = absorption_times(&ch).unwrap();
        let uniform = pv(&[0.5, 0.5]);
        assert_abs_diff_eq!(
            expected_collapse_time_from(&ch, &times, &uniform).unwrap(),
            2.0,
            epsilon = 1e-12
        );
        let dirac = pv(&[0.0, 1.0]);
        assert_eq!(expected_collapse_time_from(&ch, &times, &dirac).unwrap(), 0.0);
        let cdf = collapse_cdf_from(&ch, &uniform, 10).unwrap();
        for (n, v) in cdf.iter().enumerate() {
            assert_abs_diff_eq!(*v, 1.0 - 0.5f64.powi(n as i32), epsilon = 1e-12);
        }
        assert_eq!(collapse_cdf_from(&ch, &dirac, 2).unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn absorption_preconditions() {
        let ch = chain(2, 2, 0.5, &[0.5, 0.5]);
        assert!(matches!(absorption_probs(&ch), Err(Error::Precondition(_))));
        assert!(matches!(absorption_times(&ch), Err(Error::Precondition(_))));
        // a > 0 with a Dirac source: (2, 0) absorbs and everything reaches it
        let ch = chain(2, 2, 0.5, &[1.0, 0.0]);
        assert_eq!(ch.absorbing(), &[0]);
        let t = absorption_times(&ch).unwrap();
        assert!(t.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn full_excitation_with_dirac_source() {
        // every row jumps straight to (0, 2)
        let ch = chain(2, 2, 1.0, &[0.0, 1.0]);
        assert_eq!(ch.absorbing(), &[2]);
        assert_eq!(absorption_times(&ch).unwrap(), vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn stationary_two_atoms() {
        let ch = chain(2, 2, 0.5, &[0.5, 0.5]);
        let st = stationary_distribution(&ch).unwrap();
        assert!(st.unique);
        for (p, e) in st.distribution.iter().zip([2.0 / 7.0, 3.0 / 7.0, 2.0 / 7.0]) {
            assert_abs_diff_eq!(*p, e, epsilon = 1e-12);
        }
        for x in &st.barycenter {
            assert_abs_diff_eq!(*x, 0.5, epsilon = 1e-12);
        }
        let f = TestFunction::indicator(2, 0).unwrap();
        let (mean, var) = st.moments(&ch, &f).unwrap();
        assert_abs_diff_eq!(mean, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(var, 1.0 / 7.0, epsilon = 1e-12);
        assert!(matches!(
            stationary_distribution(&chain(2, 2, 0.0, &[0.5, 0.5])),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn stationary_barycenter_is_source() {
        for (n, mu0, a) in [
            (6, vec![0.2, 0.3, 0.5], 0.1),
            (9, vec![0.7, 0.3], 0.9),
            (4, vec![0.1, 0.2, 0.3, 0.4], 0.35),
        ] {
            let ch = chain(n, mu0.len(), a, &mu0);
            let st = stationary_distribution(&ch).unwrap();
            assert!(st.unique);
            for (x, e) in st.barycenter.iter().zip(&mu0) {
                assert!((x - e).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn stationary_reducible_source() {
        // mu0 misses atom 2: states with atom-2 mass are transient and the
        // closed class is the face {count_2 = 0}
        let ch = chain(3, 3, 0.4, &[0.5, 0.5, 0.0]);
        let st = stationary_distribution(&ch).unwrap();
        assert!(st.unique);
        for (s, state) in ch.states().iter().enumerate() {
            if state.counts()[2] > 0 {
                assert_eq!(st.distribution[s], 0.0);
            }
        }
        // a Dirac source gives a single absorbing class
        let ch = chain(3, 2, 0.4, &[1.0, 0.0]);
        let st = stationary_distribution(&ch).unwrap();
        assert_eq!(st.distribution[0], 1.0);
    }

    #[test]
    fn mean_trajectory_routes_agree() {
        let cases = [
            ExperimentConfig::new(pv(&[0.2, 0.3, 0.5]), 6, 0.3, 0.0).unwrap(),
            ExperimentConfig::new(pv(&[0.5, 0.5]), 2, 0.0, 0.0).unwrap(),
            ExperimentConfig::new(pv(&[0.6, 0.4]), 5, 0.2, 0.7)
                .unwrap()
                .with_theta0(pv(&[0.1, 0.9])),
            ExperimentConfig::new(pv(&[0.6, 0.4]), 5, 0.0, 0.4)
                .unwrap()
                .with_theta0(pv(&[0.1, 0.9])),
        ];
        for cfg in &cases {
            for f in crate::measure::make_cdc(&cfg.support) {
                let exact = exact_mean_trajectory(cfg, &f, 50).unwrap();
                let iterated = barycenter_trajectory(cfg, &f, 50).unwrap();
                for (x, y) in exact.iter().zip(&iterated) {
                    assert!((x - y).abs() <= 1e-10, "{x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn chain_powers_from_off_source_start() {
        // a = 1/2, mu0 = delta_0, start at composition (0, 2):
        // E[mu_n(f_0)] = 1 - 2^{-n}
        let ch = chain(2, 2, 0.5, &[1.0, 0.0]);
        let f = TestFunction::indicator(2, 0).unwrap();
        let values: Vec<f64> = (0..ch.len()).map(|s| ch.state_value(s, &f).unwrap()).collect();
        let mut dist = vec![0.0, 0.0, 1.0];
        for n in 0..20 {
            let mean: f64 = dist.iter().zip(&values).map(|(p, v)| p * v).sum();
            assert_abs_diff_eq!(mean, 1.0 - 0.5f64.powi(n), epsilon = 1e-12);
            dist = ch.propagate(&dist);
        }
    }

    #[test]
    fn wright_fisher_mean_is_frozen() {
        let ch = chain(2, 2, 0.0, &[0.5, 0.5]);
        let f = TestFunction::indicator(2, 0).unwrap();
        let values: Vec<f64> = (0..3).map(|s| ch.state_value(s, &f).unwrap()).collect();
        let mut dist = vec![0.0, 1.0, 0.0];
        for _ in 0..30 {
            let mean: f64 = dist.iter().zip(&values).map(|(p, v)| p * v).sum();
            assert_abs_diff_eq!(mean, 0.5, epsilon = 1e-12);
            dist = ch.propagate(&dist);
        }
    }
}
