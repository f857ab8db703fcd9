use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of pseudocopies.
pub const DEFAULT_EXPANSION_CAP: usize = 1_000_000;

/// Split size giving about ten pseudocopies per unit on average.
pub fn default_delta(total: f64, units: usize) -> f64 {
    total / (10.0 * units as f64)
}

/// Coordinates replicated `count_ℓ = max(1, round(w_ℓ/δ))` times.
///
/// Copies of a unit are stored contiguously and units appear in index order,
/// so `source` is nondecreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpandedFrame {
    dim: usize,
    unit_coords: Vec<f64>,
    counts: Vec<usize>,
    source: Vec<usize>,
}

impl ExpandedFrame {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of pseudocopies N_exp.
    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    pub fn units(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Source unit of every pseudocopy.
    pub fn source(&self) -> &[usize] {
        &self.source
    }

    pub fn point(&self, index: usize) -> &[f64] {
        self.unit_coord(self.source[index])
    }

    pub fn unit_coord(&self, unit: usize) -> &[f64] {
        &self.unit_coords[unit * self.dim..(unit + 1) * self.dim]
    }
}

/// Expands weighted points. `weights` need not lie in (0, 1].
pub fn expand_weighted(
    dim: usize,
    coords: &[f64],
    weights: &[f64],
    delta: f64,
    cap: usize,
) -> Result<ExpandedFrame> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("split size must be positive, got {delta}")));
    }
    if coords.len() != weights.len() * dim {
        return Err(Error::DimensionMismatch {
            expected: weights.len() * dim,
            found: coords.len(),
        });
    }
    let counts: Vec<usize> = weights
        .iter()
        .map(|w| {
            let c = (w / delta).round();
            if c.is_finite() && c >= 1.0 {
                c.min(usize::MAX as f64) as usize
            } else {
                1
            }
        })
        .collect();
    let size = counts.iter().try_fold(0usize, |acc, &c| acc.checked_add(c));
    let size = match size {
        Some(s) if s <= cap => s,
        Some(s) => return Err(Error::ExpansionTooLarge { size: s, cap }),
        None => return Err(Error::ExpansionTooLarge { size: usize::MAX, cap }),
    };
    let mut source = Vec::with_capacity(size);
    for (unit, &c) in counts.iter().enumerate() {
        source.extend(std::iter::repeat_n(unit, c));
    }
    Ok(ExpandedFrame {
        dim,
        unit_coords: coords.to_vec(),
        counts,
        source,
    })
}

/// Expands a population by its inclusion probabilities with the default cap.
pub fn expand(pop: &crate::Population, delta: f64) -> Result<ExpandedFrame> {
    expand_weighted(pop.dim(), pop.coords_flat(), pop.pi(), delta, DEFAULT_EXPANSION_CAP)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Population;

    #[test]
    fn counts_follow_rounding_rule() {
        let f = expand_weighted(1, &[0.0, 1.0], &[0.5, 0.04], 0.1, 100).unwrap();
        assert_eq!(f.counts(), &[5, 1]);
        assert_eq!(f.len(), 6);
        assert_eq!(f.source(), &[0, 0, 0, 0, 0, 1]);
    }

    #[test]
    fn worked_example_counts() {
        let pi = vec![0.7, 0.3, 0.4, 0.8, 0.3, 0.65, 0.45, 0.2, 0.2];
        let pop = Population::new((1..=9).map(|i| vec![i as f64]).collect(), pi.clone()).unwrap();
        let f = expand(&pop, 0.05).unwrap();
        let oracle: Vec<usize> = pi.iter().map(|p| (p / 0.05).round().max(1.0) as usize).collect();
        assert_eq!(f.counts(), &[14, 6, 8, 16, 6, 13, 9, 4, 4]);
        assert_eq!(f.counts(), oracle.as_slice());
        assert_eq!(f.len(), 80);
    }

    #[test]
    fn cap_is_enforced() {
        let err = expand_weighted(1, &[0.0, 1.0], &[0.5, 0.5], 1e-3, 999).unwrap_err();
        assert!(matches!(err, Error::ExpansionTooLarge { size: 1000, cap: 999 }));
    }

    #[test]
    fn non_positive_delta_is_rejected() {
        assert!(expand_weighted(1, &[0.0], &[1.0], 0.0, 10).is_err());
    }
}
