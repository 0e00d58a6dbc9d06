//! Probability vectors on finite supports and the handful of functionals the
//! rest of the crate needs: integration against bounded test functions,
//! mixtures, empirical measures and two metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs may be off by this much before renormalization.
pub const INPUT_SUM_TOLERANCE: f64 = 1e-9;

/// Stored weights sum to one within this tolerance.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// A finite sample space of `K` atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Support {
    labels: Vec<String>,
    coords: Option<Vec<f64>>,
}

impl Support {
    /// Atoms labelled `0..k` with no embedding.
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("support must have at least one atom"));
        }
        Ok(Support {
            labels: (0..k).map(|i| i.to_string()).collect(),
            coords: None,
        })
    }

    /// Attaches a 1-D embedding used by [`wasserstein1_1d`].
    pub fn with_coords(mut self, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != self.size() {
            return Err(Error::invalid(format!(
                "expected {} coordinates, got {}",
                self.size(),
                coords.len()
            )));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("coordinates must be finite"));
        }
        if coords.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("coordinates must be strictly increasing"));
        }
        self.coords = Some(coords);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.size() {
            return Err(Error::invalid(format!(
                "expected {} labels, got {}",
                self.size(),
                labels.len()
            )));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn coords(&self) -> Option<&[f64]> {
        self.coords.as_deref()
    }
}

/// A probability measure on `K` atoms.
///
/// Weights are nonnegative and are renormalized on construction, so an
/// input with a single nonzero weight always becomes an exact Dirac.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Accepts weights that already sum to one up to [`INPUT_SUM_TOLERANCE`].
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        check_weights(&weights)?;
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > INPUT_SUM_TOLERANCE {
            return Err(Error::invalid(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self::renormalized(weights, sum))
    }

    /// Normalizes arbitrary nonnegative weights with a positive total.
    pub fn from_unnormalized(weights: Vec<f64>) -> Result<Self> {
        check_weights(&weights)?;
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 || !sum.is_finite() {
            return Err(Error::invalid("weights must have a positive finite total"));
        }
        Ok(Self::renormalized(weights, sum))
    }

    pub fn dirac(k: usize, atom: usize) -> Result<Self> {
        if atom >= k {
            return Err(Error::invalid(format!("atom {atom} outside support of size {k}")));
        }
        let mut w = vec![0.0; k];
        w[atom] = 1.0;
        Ok(ProbVector(w))
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("support must have at least one atom"));
        }
        Ok(ProbVector(vec![1.0 / k as f64; k]))
    }

    /// Frequencies `counts[i] / sum(counts)`.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::invalid("counts must not all be zero"));
        }
        let n = total as f64;
        Ok(ProbVector(counts.iter().map(|&c| c as f64 / n).collect()))
    }

    /// Weights already within [`SUM_TOLERANCE`] of one are kept bit for bit,
    /// so printed vectors parse back unchanged.
    fn renormalized(mut weights: Vec<f64>, sum: f64) -> Self {
        if weights.iter().filter(|&&w| w > 0.0).count() == 1 {
            weights.iter_mut().filter(|w| **w > 0.0).for_each(|w| *w = 1.0);
        } else if (sum - 1.0).abs() > SUM_TOLERANCE {
            weights.iter_mut().for_each(|w| *w /= sum);
        }
        ProbVector(weights)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, atom: usize) -> f64 {
        self.0[atom]
    }

    pub fn support_size(&self) -> usize {
        self.0.iter().filter(|&&w| w > 0.0).count()
    }

    pub fn is_dirac(&self) -> bool {
        self.dirac_atom().is_some()
    }

    /// The atom carrying all the mass, if there is one.
    pub fn dirac_atom(&self) -> Option<usize> {
        let mut atoms = self.0.iter().enumerate().filter(|(_, &w)| w > 0.0);
        match (atoms.next(), atoms.next()) {
            (Some((i, _)), None) => Some(i),
            _ => None,
        }
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::invalid("probability vector must be nonempty"));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::invalid(format!(
            "weights must be finite and nonnegative, found {w}"
        )));
    }
    Ok(())
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;

    fn try_from(weights: Vec<f64>) -> Result<Self> {
        ProbVector::new(weights)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Self {
        p.0
    }
}

/// A test function with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TestFunction(Vec<f64>);

impl TestFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("test function must be nonempty"));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!(
                "test function values must lie in [0, 1], found {v}"
            )));
        }
        Ok(TestFunction(values))
    }

    pub fn indicator(k: usize, atom: usize) -> Result<Self> {
        if atom >= k {
            return Err(Error::invalid(format!("atom {atom} outside support of size {k}")));
        }
        let mut v = vec![0.0; k];
        v[atom] = 1.0;
        Ok(TestFunction(v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for TestFunction {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        TestFunction::new(values)
    }
}

impl From<TestFunction> for Vec<f64> {
    fn from(f: TestFunction) -> Self {
        f.0
    }
}

fn same_size(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::invalid(format!(
            "support size mismatch: {left} vs {right}"
        )));
    }
    Ok(())
}

/// `sum_i p_i f_i`.
pub fn integrate(p: &ProbVector, f: &TestFunction) -> Result<f64> {
    same_size(p.len(), f.len())?;
    let v: f64 = p.0.iter().zip(&f.0).map(|(w, x)| w * x).sum();
    Ok(v.clamp(0.0, 1.0))
}

/// Half the L1 distance between the weight vectors.
pub fn tv_distance(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    same_size(p.len(), q.len())?;
    let d: f64 = p.0.iter().zip(&q.0).map(|(x, y)| (x - y).abs()).sum();
    Ok((0.5 * d).min(1.0))
}

/// Earth mover's distance on the line, through the CDF difference.
pub fn wasserstein1_1d(p: &ProbVector, q: &ProbVector, s: &Support) -> Result<f64> {
    let coords = s
        .coords()
        .ok_or_else(|| Error::Unsupported("support has no coordinates".into()))?;
    same_size(p.len(), q.len())?;
    same_size(p.len(), coords.len())?;
    let mut cdf_gap = 0.0;
    let mut total = 0.0;
    for i in 0..coords.len() - 1 {
        cdf_gap += p.0[i] - q.0[i];
        total += cdf_gap.abs() * (coords[i + 1] - coords[i]);
    }
    Ok(total)
}

/// `weight * p + (1 - weight) * q`.
pub fn mix(weight: f64, p: &ProbVector, q: &ProbVector) -> Result<ProbVector> {
    if !(0.0..=1.0).contains(&weight) {
        return Err(Error::invalid(format!(
            "mixture weight must lie in [0, 1], got {weight}"
        )));
    }
    same_size(p.len(), q.len())?;
    if weight == 1.0 {
        return Ok(p.clone());
    }
    if weight == 0.0 {
        return Ok(q.clone());
    }
    let w: Vec<f64> =
        p.0.iter()
            .zip(&q.0)
            .map(|(x, y)| weight * x + (1.0 - weight) * y)
            .collect();
    let sum = w.iter().sum();
    Ok(ProbVector::renormalized(w, sum))
}

/// Per-atom counts of a batch of atom indices.
pub fn count_atoms(samples: &[usize], k: usize) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; k];
    for &x in samples {
        if x >= k {
            return Err(Error::invalid(format!(
                "sample index {x} outside support of size {k}"
            )));
        }
        counts[x] += 1;
    }
    Ok(counts)
}

pub fn empirical_from_samples(samples: &[usize], s: &Support) -> Result<ProbVector> {
    if samples.is_empty() {
        return Err(Error::invalid("empirical measure of an empty sample"));
    }
    ProbVector::from_counts(&count_atoms(samples, s.size())?)
}

/// The singleton indicators, which separate points of the simplex.
pub fn make_cdc(s: &Support) -> Vec<TestFunction> {
    (0..s.size())
        .map(|i| TestFunction::indicator(s.size(), i).expect("atom within support"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupportStats {
    pub support_size: usize,
    pub max_atom: f64,
    pub entropy: f64,
}

pub fn support_stats(p: &ProbVector) -> SupportStats {
    let entropy = -p
        .0
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| w * w.ln())
        .sum::<f64>();
    SupportStats {
        support_size: p.support_size(),
        max_atom: p.0.iter().copied().fold(0.0, f64::max),
        entropy: entropy.max(0.0),
    }
}
