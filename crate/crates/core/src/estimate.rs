//! Narain–Horvitz–Thompson estimation of totals and their variances.
//!
//! `domain` arguments restrict the target total to a subset A of U; `None`
//! means the whole population.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::{Population, Sample};

/// Symmetric N×N matrix of second-order inclusion probabilities with the
/// first-order probabilities on the diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointInclusionMatrix {
    size: usize,
    values: Vec<f64>,
}

impl JointInclusionMatrix {
    pub fn zeros(size: usize) -> Self {
        JointInclusionMatrix {
            size,
            values: vec![0.0; size * size],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let size = rows.len();
        let mut values = Vec::with_capacity(size * size);
        for row in rows {
            if row.len() != size {
                return Err(Error::DimensionMismatch {
                    expected: size,
                    found: row.len(),
                });
            }
            values.extend(row);
        }
        Ok(JointInclusionMatrix { size, values })
    }

    /// Joint probabilities of a design given as (probability, sample) pairs.
    pub fn from_design<'a>(size: usize, design: impl IntoIterator<Item = (f64, &'a Sample)>) -> Self {
        let mut m = Self::zeros(size);
        for (p, s) in design {
            for &a in s.members() {
                for &b in s.members() {
                    m.values[a * size + b] += p;
                }
            }
        }
        m
    }

    /// Classical simple random sampling without replacement of size `n`.
    pub fn srs(size: usize, n: usize) -> Self {
        let big_n = size as f64;
        let nf = n as f64;
        let first = nf / big_n;
        let second = if size > 1 {
            nf * (nf - 1.0) / (big_n * (big_n - 1.0))
        } else {
            0.0
        };
        let mut m = Self::zeros(size);
        for a in 0..size {
            for b in 0..size {
                m.values[a * size + b] = if a == b { first } else { second };
            }
        }
        m
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.size + b]
    }

    pub(crate) fn add(&mut self, a: usize, b: usize, v: f64) {
        self.values[a * self.size + b] += v;
    }

    /// Largest |Σ_{b≠a} π_ab − (n−1)π_a| over units: zero for fixed-size designs.
    pub fn fixed_size_defect(&self, n: usize) -> f64 {
        (0..self.size)
            .map(|a| {
                let off: f64 = (0..self.size).filter(|&b| b != a).map(|b| self.get(a, b)).sum();
                (off - (n as f64 - 1.0) * self.get(a, a)).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Which variance estimator to use for a realized sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarianceMode {
    /// Horvitz–Thompson form, unbiased for any measurable design.
    General,
    /// Sen–Yates–Grundy form for fixed-size designs.
    FixedSize,
}

fn domain_mask(size: usize, domain: Option<&[usize]>) -> Result<Vec<bool>> {
    match domain {
        None => Ok(vec![true; size]),
        Some(units) => {
            let mut mask = vec![false; size];
            for &u in units {
                if u >= size {
                    return Err(Error::UnknownUnit {
                        unit: u,
                        population: size,
                    });
                }
                mask[u] = true;
            }
            Ok(mask)
        }
    }
}

fn check_column(pop: &Population, y: &[f64]) -> Result<()> {
    if y.len() != pop.len() {
        return Err(Error::DimensionMismatch {
            expected: pop.len(),
            found: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("study variable must be finite".into()));
    }
    Ok(())
}

/// NHT estimate Σ_{ℓ∈A∩S} y_ℓ/π_ℓ.
pub fn nht_estimate(pop: &Population, sample: &Sample, y: &[f64], domain: Option<&[usize]>) -> Result<f64> {
    check_column(pop, y)?;
    let mask = domain_mask(pop.len(), domain)?;
    let mut total = 0.0;
    for &u in sample.members() {
        pop.check_unit(u)?;
        if !mask[u] {
            continue;
        }
        let p = pop.pi()[u];
        if p <= 0.0 {
            return Err(Error::ZeroProbabilityMember { unit: u });
        }
        total += y[u] / p;
    }
    Ok(total)
}

/// Design variance of the NHT estimator: the double sum over A of
/// (y_ℓ/π_ℓ)(y_ℓ'/π_ℓ')(π_ℓℓ' − π_ℓπ_ℓ').
pub fn ht_variance(pop: &Population, joint: &JointInclusionMatrix, y: &[f64], domain: Option<&[usize]>) -> Result<f64> {
    check_column(pop, y)?;
    if joint.len() != pop.len() {
        return Err(Error::DimensionMismatch {
            expected: pop.len(),
            found: joint.len(),
        });
    }
    let mask = domain_mask(pop.len(), domain)?;
    let pi = pop.pi();
    let units: Vec<usize> = (0..pop.len()).filter(|&u| mask[u]).collect();
    let mut v = 0.0;
    for &a in &units {
        let ya = y[a] / pi[a];
        for &b in &units {
            let pab = if a == b { pi[a] } else { joint.get(a, b) };
            v += ya * (y[b] / pi[b]) * (pab - pi[a] * pi[b]);
        }
    }
    Ok(v)
}

/// Variance estimate from a realized sample.
///
/// Fails with [`Error::ZeroJointProbability`] when a sampled pair has
/// π_ℓℓ' = 0, where neither estimator is defined.
pub fn ht_variance_estimate(
    pop: &Population,
    sample: &Sample,
    joint: &JointInclusionMatrix,
    y: &[f64],
    domain: Option<&[usize]>,
    mode: VarianceMode,
) -> Result<f64> {
    check_column(pop, y)?;
    if joint.len() != pop.len() {
        return Err(Error::DimensionMismatch {
            expected: pop.len(),
            found: joint.len(),
        });
    }
    let mask = domain_mask(pop.len(), domain)?;
    let pi = pop.pi();
    let units: Vec<usize> = sample.members().iter().copied().filter(|&u| mask[u]).collect();
    for &u in &units {
        pop.check_unit(u)?;
    }
    let mut v = 0.0;
    for (i, &a) in units.iter().enumerate() {
        for &b in &units[i..] {
            let pab = if a == b { pi[a] } else { joint.get(a, b) };
            if pab <= 0.0 {
                return Err(Error::ZeroJointProbability { a, b });
            }
            let ea = y[a] / pi[a];
            let eb = y[b] / pi[b];
            match mode {
                VarianceMode::General => {
                    let term = ea * eb * (pab - pi[a] * pi[b]) / pab;
                    v += if a == b { term } else { 2.0 * term };
                }
                VarianceMode::FixedSize => {
                    if a != b {
                        // Each unordered pair appears twice in the double sum; the ½ cancels.
                        v += (ea - eb).powi(2) * (pi[a] * pi[b] - pab) / pab;
                    }
                }
            }
        }
    }
    Ok(v)
}
