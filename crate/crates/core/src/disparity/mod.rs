//! Density Disparity Index.
//!
//! The population is clustered into n UP-balanced clusters starting from the
//! sample, each sample unit is matched to a centroid, every cluster is
//! shifted onto its matched sample unit, and the density surfaces before
//! and after the shift are compared unit by unit. Negative values mean the
//! sample is too concentrated, positive values mean it is too dispersed.

pub mod hungarian;
pub mod kde;

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::clustering::{up_balanced_clustering_with, BalancedPartition, ClusteringOptions};
use crate::error::{Error, Result};
use crate::population::{fmt_f64, Population, Sample};
use crate::rng;

pub use hungarian::{assign_centroids, Assignment};
pub use kde::{mkde, scott_bandwidth, Bandwidth};

/// clamp(β/γ, −1, 1).
pub fn scale(beta: f64, gamma: f64) -> f64 {
    (beta / gamma).clamp(-1.0, 1.0)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityConfig {
    /// Saturation level for −sin α.
    pub gamma_sin: f64,
    /// Saturation level for 1 − cos α.
    pub gamma_cos: f64,
    /// Fixed bandwidth; `None` fits Scott's rule on the original coordinates.
    pub bandwidth: Option<Bandwidth>,
    pub clustering: ClusteringOptions,
}

impl Default for DisparityConfig {
    fn default() -> Self {
        DisparityConfig {
            gamma_sin: (PI / 8.0).sin(),
            gamma_cos: 1.0 - (PI / 8.0).cos(),
            bandwidth: None,
            clustering: ClusteringOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitAngle {
    pub f_orig: f64,
    pub f_trans: f64,
    pub sin: f64,
    pub cos: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityReport {
    pub di: f64,
    pub d_net: f64,
    pub d_plus: f64,
    pub d_minus: f64,
    pub eta: f64,
    pub n: usize,
    pub population: usize,
    pub bandwidth: Bandwidth,
    pub assignment: Assignment,
    pub units: Vec<UnitAngle>,
}

impl DisparityReport {
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "DI": self.di,
            "D_net": self.d_net,
            "D_plus": self.d_plus,
            "D_minus": self.d_minus,
            "eta": self.eta,
            "n": self.n,
            "N": self.population,
            "bandwidth": self.bandwidth.half_widths,
        })
    }

    /// Writes `unit,f_orig,f_trans,sin,cos`.
    pub fn write_units_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["unit", "f_orig", "f_trans", "sin", "cos"])?;
        for (u, a) in self.units.iter().enumerate() {
            w.write_record([
                (u + 1).to_string(),
                fmt_f64(a.f_orig),
                fmt_f64(a.f_trans),
                fmt_f64(a.sin),
                fmt_f64(a.cos),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Moves every unit of cluster i by s_σ⁻¹(i) − o_i. Returns flat coordinates.
pub fn cluster_translation(
    pop: &Population,
    labels: &[usize],
    centroids: &[Vec<f64>],
    sample_coords: &[Vec<f64>],
    assignment: &Assignment,
) -> Result<Vec<f64>> {
    if labels.len() != pop.len() {
        return Err(Error::DimensionMismatch {
            expected: pop.len(),
            found: labels.len(),
        });
    }
    let inv = assignment.inverse();
    let shifts: Vec<Vec<f64>> = (0..centroids.len())
        .map(|i| {
            sample_coords[inv[i]]
                .iter()
                .zip(&centroids[i])
                .map(|(s, o)| s - o)
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(pop.coords_flat().len());
    for (u, &l) in labels.iter().enumerate() {
        let shift = shifts.get(l).ok_or_else(|| Error::InvalidArgument(format!("label {l} has no centroid")))?;
        out.extend(pop.coord(u).iter().zip(shift).map(|(c, s)| c + s));
    }
    Ok(out)
}

fn angles(f_orig: f64, f_trans: f64) -> (f64, f64) {
    let norm = std::f64::consts::SQRT_2 * f_orig.hypot(f_trans);
    if norm == 0.0 || f_orig == f_trans {
        (0.0, 1.0)
    } else {
        ((f_trans - f_orig) / norm, (f_trans + f_orig) / norm)
    }
}

/// DI from a fixed partition (hard labels and centroids), sample coordinates
/// and bandwidth. The matching is recomputed from these inputs.
pub fn disparity_from_parts(
    pop: &Population,
    labels: &[usize],
    centroids: &[Vec<f64>],
    sample_coords: &[Vec<f64>],
    bandwidth: &Bandwidth,
    cfg: &DisparityConfig,
) -> Result<DisparityReport> {
    let assignment = assign_centroids(sample_coords, centroids)?;
    disparity_with_assignment(pop, labels, centroids, sample_coords, &assignment, bandwidth, cfg)
}

/// DI with every ingredient held fixed.
pub fn disparity_with_assignment(
    pop: &Population,
    labels: &[usize],
    centroids: &[Vec<f64>],
    sample_coords: &[Vec<f64>],
    assignment: &Assignment,
    bandwidth: &Bandwidth,
    cfg: &DisparityConfig,
) -> Result<DisparityReport> {
    if pop.dim() != 2 {
        return Err(Error::UnsupportedDimension {
            expected: 2,
            found: pop.dim(),
        });
    }
    if !(cfg.gamma_sin > 0.0 && cfg.gamma_cos > 0.0) {
        return Err(Error::InvalidArgument("saturation levels must be positive".into()));
    }
    let translated = cluster_translation(pop, labels, centroids, sample_coords, assignment)?;
    let f0 = mkde(2, pop.coords_flat(), pop.coords_flat(), bandwidth)?;
    let f1 = mkde(2, &translated, &translated, bandwidth)?;
    let big_n = pop.len() as f64;
    let mut d_plus = 0.0;
    let mut d_minus = 0.0;
    let mut eta = 0.0;
    let mut units = Vec::with_capacity(pop.len());
    for (&a, &b) in f0.iter().zip(&f1) {
        let (sin, cos) = angles(a, b);
        let s = scale(-sin, cfg.gamma_sin);
        if -sin >= 0.0 {
            d_plus += s;
        } else {
            d_minus += s;
        }
        eta += scale(1.0 - cos, cfg.gamma_cos);
        units.push(UnitAngle {
            f_orig: a,
            f_trans: b,
            sin,
            cos,
        });
    }
    let d_net = (d_plus + d_minus) / big_n;
    let eta = eta / big_n;
    let di = d_net + (sign(d_net) - d_net) * eta;
    Ok(DisparityReport {
        di,
        d_net,
        d_plus,
        d_minus,
        eta,
        n: centroids.len(),
        population: pop.len(),
        bandwidth: bandwidth.clone(),
        assignment: assignment.clone(),
        units,
    })
}

/// Sample coordinates in ascending unit order.
pub fn sample_coords(pop: &Population, sample: &Sample) -> Vec<Vec<f64>> {
    sample.members().iter().map(|&u| pop.coord(u).to_vec()).collect()
}

/// Partition used by the index: clustering initialized at the sample.
pub fn disparity_partition(pop: &Population, sample: &Sample, seed: u64, cfg: &DisparityConfig) -> Result<BalancedPartition> {
    if sample.len() != pop.sample_size() {
        return Err(Error::InvalidArgument(format!(
            "sample has {} units, design size is {}",
            sample.len(),
            pop.sample_size()
        )));
    }
    for &u in sample.members() {
        pop.check_unit(u)?;
    }
    let init = sample_coords(pop, sample);
    up_balanced_clustering_with(pop, Some(&init), rng::derive(seed, rng::tag::DISPARITY), &cfg.clustering)
}

pub fn density_disparity_index_with(
    pop: &Population,
    sample: &Sample,
    seed: u64,
    cfg: &DisparityConfig,
) -> Result<DisparityReport> {
    if pop.dim() != 2 {
        return Err(Error::UnsupportedDimension {
            expected: 2,
            found: pop.dim(),
        });
    }
    let partition = disparity_partition(pop, sample, seed, cfg)?;
    let bandwidth = match &cfg.bandwidth {
        Some(b) => b.clone(),
        None => scott_bandwidth(2, pop.coords_flat())?,
    };
    disparity_from_parts(
        pop,
        &partition.hard_labels(),
        partition.centroids(),
        &sample_coords(pop, sample),
        &bandwidth,
        cfg,
    )
}

/// DI of `sample` with default settings and an optional split size.
pub fn density_disparity_index(pop: &Population, sample: &Sample, delta: Option<f64>, seed: u64) -> Result<DisparityReport> {
    let mut cfg = DisparityConfig::default();
    cfg.clustering.delta = delta;
    density_disparity_index_with(pop, sample, seed, &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_saturates() {
        let g = 0.3;
        assert!((scale(0.5 * g, g) - 0.5).abs() < 1e-15);
        assert_eq!(scale(3.0 * g, g), 1.0);
        assert_eq!(scale(-g, g), -1.0);
    }

    #[test]
    fn angles_are_unit_vectors() {
        for (a, b) in [(1.0, 2.0), (0.0, 3.0), (5.0, 0.0), (0.2, 0.2)] {
            let (s, c) = angles(a, b);
            assert!((s * s + c * c - 1.0).abs() < 1e-12);
        }
        assert_eq!(angles(0.0, 0.0), (0.0, 1.0));
    }

    fn grid(side: usize) -> Vec<[f64; 2]> {
        (0..side * side)
            .map(|i| [(i % side) as f64 / side as f64, (i / side) as f64 / side as f64])
            .collect()
    }

    #[test]
    fn sample_at_centroids_gives_zero() {
        let pop = Population::equal_probability(&grid(10), 4).unwrap();
        let part = crate::clustering::up_balanced_clustering(&pop, 4, None, None, 3).unwrap();
        let bw = scott_bandwidth(2, pop.coords_flat()).unwrap();
        let r = disparity_from_parts(
            &pop,
            &part.hard_labels(),
            part.centroids(),
            part.centroids(),
            &bw,
            &DisparityConfig::default(),
        )
        .unwrap();
        assert_eq!(r.d_net, 0.0);
        assert_eq!(r.di, 0.0);
        assert!(r.eta.abs() < 1e-12);
    }

    #[test]
    fn decomposition_and_range() {
        let pop = Population::equal_probability(&grid(8), 4).unwrap();
        let s = Sample::new(vec![0, 1, 8, 9]);
        let r = density_disparity_index(&pop, &s, None, 0).unwrap();
        assert!((r.d_net * 64.0 - (r.d_plus + r.d_minus)).abs() < 1e-12);
        assert!((-1.0..=1.0).contains(&r.di));
        assert!((0.0..=1.0).contains(&r.eta));
        assert!(r.d_plus >= 0.0 && r.d_minus <= 0.0);
        assert!(r.di < 0.0, "clumped corner sample should read as too close: {}", r.di);
    }

    #[test]
    fn non_planar_populations_are_rejected() {
        let pop = Population::new((0..4).map(|i| vec![i as f64]).collect(), vec![0.5; 4]).unwrap();
        let err = density_disparity_index(&pop, &Sample::new(vec![0, 3]), None, 0);
        assert!(matches!(err, Err(Error::UnsupportedDimension { .. })));
    }
}
