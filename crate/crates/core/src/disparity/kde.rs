//! Uniform-kernel multivariate density estimate with a diagonal bandwidth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diagonal H^{1/2}: the half-widths of the kernel box per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth {
    pub half_widths: Vec<f64>,
}

impl Bandwidth {
    pub fn new(half_widths: Vec<f64>) -> Result<Self> {
        if half_widths.is_empty() || half_widths.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(Error::SingularBandwidth);
        }
        Ok(Bandwidth { half_widths })
    }

    /// |H|^{1/2}.
    pub fn sqrt_det(&self) -> f64 {
        self.half_widths.iter().product()
    }
}

/// Scott's rule σ̂_d · N^{−1/(D+4)} per dimension. A dimension whose standard
/// deviation is below 1e-6 of its range is floored there; a constant
/// dimension uses σ̂ = 1.
pub fn scott_bandwidth(dim: usize, coords: &[f64]) -> Result<Bandwidth> {
    let n = coords.len() / dim.max(1);
    if n < 2 || dim == 0 {
        return Err(Error::SingularBandwidth);
    }
    let factor = (n as f64).powf(-1.0 / (dim as f64 + 4.0));
    let mut h = Vec::with_capacity(dim);
    for d in 0..dim {
        let col = coords.iter().skip(d).step_by(dim);
        let mean = col.clone().sum::<f64>() / n as f64;
        let var = col.clone().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        let range = hi - lo;
        let sigma = if range == 0.0 { 1.0 } else { var.sqrt().max(1e-6 * range) };
        h.push(sigma * factor);
    }
    Bandwidth::new(h)
}

/// f(c) = (1/N) Σ_m |H|^{−1/2} 2^{−D} 1{‖H^{−1/2}(c − c_m)‖∞ ≤ 1}.
pub fn mkde(dim: usize, data: &[f64], eval: &[f64], bw: &Bandwidth) -> Result<Vec<f64>> {
    if bw.half_widths.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bw.half_widths.len(),
        });
    }
    let n = data.len() / dim;
    if n == 0 {
        return Err(Error::EmptyPopulation);
    }
    let norm = 1.0 / (n as f64 * 2f64.powi(dim as i32) * bw.sqrt_det());
    Ok(eval
        .chunks(dim)
        .map(|c| {
            let inside = data
                .chunks(dim)
                .filter(|m| c.iter().zip(*m).zip(&bw.half_widths).all(|((a, b), h)| (a - b).abs() <= *h))
                .count();
            inside as f64 * norm
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_mass_at_a_point() {
        let data = vec![0.3, 0.4, 0.3, 0.4, 0.3, 0.4];
        let bw = Bandwidth::new(vec![0.5, 0.25]).unwrap();
        let f = mkde(2, &data, &[0.3, 0.4], &bw).unwrap();
        assert!((f[0] - 1.0 / (4.0 * 0.125)).abs() < 1e-12);
    }

    #[test]
    fn far_points_have_zero_density() {
        let bw = Bandwidth::new(vec![0.1, 0.1]).unwrap();
        let f = mkde(2, &[0.0, 0.0, 1.0, 1.0], &[5.0, 5.0], &bw).unwrap();
        assert_eq!(f[0], 0.0);
    }

    #[test]
    fn midpoint_sees_both_points() {
        let bw = Bandwidth::new(vec![0.5, 0.5]).unwrap();
        let f = mkde(2, &[0.0, 0.0, 0.99, 0.0], &[0.495, 0.0], &bw).unwrap();
        assert!((f[0] - 2.0 / (2.0 * 4.0 * 0.25)).abs() < 1e-12);
    }

    #[test]
    fn scott_rule_and_floors() {
        let coords = vec![0.0, 5.0, 1.0, 5.0, 2.0, 5.0, 3.0, 5.0];
        let bw = scott_bandwidth(2, &coords).unwrap();
        let sd = (5.0f64 / 3.0).sqrt();
        let factor = 4f64.powf(-1.0 / 6.0);
        assert!((bw.half_widths[0] - sd * factor).abs() < 1e-12);
        assert!((bw.half_widths[1] - factor).abs() < 1e-12);
        assert!(Bandwidth::new(vec![0.0, 1.0]).is_err());
    }
}
