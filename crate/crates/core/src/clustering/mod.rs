//! n-Means UP-balanced clustering.
//!
//! The population is expanded into pseudocopies, clustered with a
//! size-constrained n-means, and the resulting soft memberships are turned
//! into an exact partition: clusters are ordered along a short open path,
//! units inside each cluster are aligned toward their neighbours, and the
//! concatenated order is cut at integer levels of cumulative probability.
//!
//! Output clusters are numbered in path order, so cluster `i` and `i + 1`
//! are path-adjacent.

pub mod expand;
pub mod nmeans;
pub mod path;
pub mod quota;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sq_dist, weighted_mean};
use crate::population::{fmt_f64, Population};

pub use expand::{default_delta, expand, expand_weighted, ExpandedFrame, DEFAULT_EXPANSION_CAP};
pub use nmeans::{balanced_nmeans, constrained_nmeans, NMeansOptions, NMeansResult};
pub use path::{align_blocks, order_clusters};
pub use quota::{quota_cut, SNAP_TOLERANCE};

/// Balance tolerance on cluster totals.
pub const BALANCE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusteringOptions {
    /// Split size; `None` uses total / (10 · units).
    pub delta: Option<f64>,
    pub expansion_cap: usize,
    pub nmeans: NMeansOptions,
}

impl Default for ClusteringOptions {
    fn default() -> Self {
        ClusteringOptions {
            delta: None,
            expansion_cap: DEFAULT_EXPANSION_CAP,
            nmeans: NMeansOptions::default(),
        }
    }
}

/// Row-stochastic N × n matrix of pseudocopy fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftMembership {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl SoftMembership {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, unit: usize, cluster: usize) -> f64 {
        self.values[unit * self.cols + cluster]
    }

    pub fn row(&self, unit: usize) -> &[f64] {
        &self.values[unit * self.cols..(unit + 1) * self.cols]
    }

    fn permute_columns(&self, order: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for u in 0..self.rows {
            let row = self.row(u);
            values.extend(order.iter().map(|&c| row[c]));
        }
        SoftMembership {
            rows: self.rows,
            cols: self.cols,
            values,
        }
    }
}

/// M[ℓ, i] = (copies of ℓ labelled i) / count_ℓ.
pub fn soft_membership(frame: &ExpandedFrame, labels: &[usize], n: usize) -> Result<SoftMembership> {
    if labels.len() != frame.len() {
        return Err(Error::DimensionMismatch {
            expected: frame.len(),
            found: labels.len(),
        });
    }
    let mut values = vec![0.0; frame.units() * n];
    for (&u, &l) in frame.source().iter().zip(labels) {
        if l >= n {
            return Err(Error::InvalidArgument(format!("label {l} out of range for {n} clusters")));
        }
        values[u * n + l] += 1.0;
    }
    for (u, &c) in frame.counts().iter().enumerate() {
        values[u * n..(u + 1) * n].iter_mut().for_each(|v| *v /= c as f64);
    }
    Ok(SoftMembership {
        rows: frame.units(),
        cols: n,
        values,
    })
}

/// A unit whose mass is split between path-adjacent clusters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Border {
    pub unit: usize,
    pub left: usize,
    pub right: usize,
    /// Fraction of the unit's probability in `left`.
    pub left_share: f64,
}

/// Exact partition into parts of unit mass, numbered in path order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalancedPartition {
    parts: usize,
    allocations: Vec<Vec<(usize, f64)>>,
    order: Vec<usize>,
    centroids: Vec<Vec<f64>>,
    preliminary_centroids: Vec<Vec<f64>>,
    membership: Option<SoftMembership>,
}

impl BalancedPartition {
    /// Number of clusters n.
    pub fn parts(&self) -> usize {
        self.parts
    }

    pub fn units(&self) -> usize {
        self.allocations.len()
    }

    /// `(cluster, fraction)` entries of a unit, in cluster order.
    pub fn allocation(&self, unit: usize) -> &[(usize, f64)] {
        &self.allocations[unit]
    }

    pub fn allocations(&self) -> &[Vec<(usize, f64)>] {
        &self.allocations
    }

    pub fn fraction(&self, unit: usize, cluster: usize) -> f64 {
        self.allocations[unit]
            .iter()
            .find(|e| e.0 == cluster)
            .map_or(0.0, |e| e.1)
    }

    /// Total order Φ used for the quota cut.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Clusters are numbered along the path, so this is the identity.
    pub fn path_order(&self) -> Vec<usize> {
        (0..self.parts).collect()
    }

    /// Final centroids: means of hard members.
    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    /// Centroids of the argmax soft labels, before the quota cut.
    pub fn preliminary_centroids(&self) -> &[Vec<f64>] {
        &self.preliminary_centroids
    }

    pub fn membership(&self) -> Option<&SoftMembership> {
        self.membership.as_ref()
    }

    /// Cluster with the largest fraction of each unit (ties to the lower cluster).
    pub fn hard_labels(&self) -> Vec<usize> {
        self.allocations
            .iter()
            .map(|a| {
                a.iter()
                    .fold((usize::MAX, -1.0), |best, &(c, f)| if f > best.1 { (c, f) } else { best })
                    .0
            })
            .collect()
    }

    /// Units with positive mass in `cluster`, in Φ order.
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.order
            .iter()
            .copied()
            .filter(|&u| self.allocations[u].iter().any(|e| e.0 == cluster))
            .collect()
    }

    /// Units allocated wholly to `cluster`, in Φ order.
    pub fn whole_members(&self, cluster: usize) -> Vec<usize> {
        self.order
            .iter()
            .copied()
            .filter(|&u| self.allocations[u].len() == 1 && self.allocations[u][0].0 == cluster)
            .collect()
    }

    /// Units split between two consecutive clusters.
    pub fn borders(&self) -> Vec<Border> {
        self.order
            .iter()
            .filter(|&&u| self.allocations[u].len() == 2)
            .map(|&u| {
                let a = &self.allocations[u];
                Border {
                    unit: u,
                    left: a[0].0,
                    right: a[1].0,
                    left_share: a[0].1,
                }
            })
            .collect()
    }

    /// Σ_ℓ mass_ℓ · fraction(ℓ, i) for every cluster.
    pub fn totals(&self, mass: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; self.parts];
        for (u, a) in self.allocations.iter().enumerate() {
            for &(c, f) in a {
                t[c] += mass[u] * f;
            }
        }
        t
    }

    /// Writes `unit,cluster,fraction,is_border` with 1-based ids.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["unit", "cluster", "fraction", "is_border"])?;
        for (u, a) in self.allocations.iter().enumerate() {
            for &(c, f) in a {
                w.write_record([
                    (u + 1).to_string(),
                    (c + 1).to_string(),
                    fmt_f64(f),
                    (a.len() > 1).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Sidecar with centroids and the path order (1-based cluster ids).
    pub fn sidecar_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n": self.parts,
            "path_order": self.path_order().iter().map(|c| c + 1).collect::<Vec<_>>(),
            "centroids": self.centroids,
            "preliminary_centroids": self.preliminary_centroids,
            "total_order": self.order.iter().map(|u| u + 1).collect::<Vec<_>>(),
        })
    }
}

fn check_permutation(order: &[usize], size: usize) -> Result<()> {
    if order.len() != size {
        return Err(Error::DimensionMismatch {
            expected: size,
            found: order.len(),
        });
    }
    let mut seen = vec![false; size];
    for &u in order {
        if u >= size || seen[u] {
            return Err(Error::InvalidArgument("order is not a permutation of the units".into()));
        }
        seen[u] = true;
    }
    Ok(())
}

fn final_centroids(
    dim: usize,
    coords: &[f64],
    mass: &[f64],
    allocations: &[Vec<(usize, f64)>],
    parts: usize,
) -> Vec<Vec<f64>> {
    let row = |u: usize| &coords[u * dim..(u + 1) * dim];
    let hard: Vec<usize> = allocations
        .iter()
        .map(|a| a.iter().fold((0, -1.0), |b, &(c, f)| if f > b.1 { (c, f) } else { b }).0)
        .collect();
    (0..parts)
        .map(|i| {
            weighted_mean(
                hard.iter().enumerate().filter(|(_, &h)| h == i).map(|(u, _)| (row(u), 1.0)),
                dim,
            )
            .or_else(|| {
                weighted_mean(
                    allocations.iter().enumerate().flat_map(|(u, a)| {
                        a.iter().filter(|e| e.0 == i).map(move |e| (row(u), mass[u] * e.1))
                    }),
                    dim,
                )
            })
            .unwrap_or_else(|| vec![f64::NAN; dim])
        })
        .collect()
}

/// Cuts the population along Φ at integer levels of cumulative π.
pub fn quota_split(pop: &Population, order: &[usize]) -> Result<BalancedPartition> {
    check_permutation(order, pop.len())?;
    let n = pop.sample_size();
    let allocations = quota_cut(order, pop.pi(), n);
    let centroids = final_centroids(pop.dim(), pop.coords_flat(), pop.pi(), &allocations, n);
    Ok(BalancedPartition {
        parts: n,
        allocations,
        order: order.to_vec(),
        preliminary_centroids: centroids.clone(),
        centroids,
        membership: None,
    })
}

/// Runs the whole pipeline on arbitrary positive masses summing to `parts`.
///
/// Masses may exceed 1; a heavy unit then spans several consecutive parts.
pub fn partition_weighted(
    dim: usize,
    coords: &[f64],
    mass: &[f64],
    parts: usize,
    init: Option<&[Vec<f64>]>,
    seed: u64,
    opts: &ClusteringOptions,
) -> Result<BalancedPartition> {
    let units = mass.len();
    if units == 0 || parts == 0 {
        return Err(Error::EmptyPopulation);
    }
    let total: f64 = mass.iter().sum();
    if (total - parts as f64).abs() > BALANCE_TOLERANCE * (parts as f64).max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "masses sum to {total}, expected {parts}"
        )));
    }
    let delta = opts.delta.unwrap_or_else(|| default_delta(total, units));
    let frame = expand_weighted(dim, coords, mass, delta, opts.expansion_cap)?;
    let nm = balanced_nmeans(&frame, parts, init, seed, &opts.nmeans)?;
    let membership = SoftMembership {
        rows: units,
        cols: parts,
        values: nm
            .flow
            .iter()
            .zip(frame.counts())
            .flat_map(|(row, &c)| row.iter().map(move |&f| f as f64 / c as f64))
            .collect(),
    };

    let row = |u: usize| &coords[u * dim..(u + 1) * dim];
    let raw: Vec<usize> = (0..units)
        .map(|u| {
            let r = membership.row(u);
            let top = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (0..parts)
                .filter(|&i| r[i] == top)
                .min_by(|&a, &b| {
                    sq_dist(row(u), &nm.centers[a])
                        .total_cmp(&sq_dist(row(u), &nm.centers[b]))
                        .then(a.cmp(&b))
                })
                .expect("nonempty row")
        })
        .collect();
    let prelim: Vec<Vec<f64>> = (0..parts)
        .map(|i| {
            weighted_mean((0..units).filter(|&u| raw[u] == i).map(|u| (row(u), 1.0)), dim)
                .unwrap_or_else(|| nm.centers[i].clone())
        })
        .collect();

    let path = order_clusters(&prelim);
    let blocks: Vec<Vec<usize>> = path
        .iter()
        .map(|&c| (0..units).filter(|&u| raw[u] == c).collect())
        .collect();
    let aligned = align_blocks(&blocks, |u| row(u).to_vec());
    let order: Vec<usize> = aligned.into_iter().flatten().collect();

    let allocations = quota_cut(&order, mass, parts);
    let centroids = final_centroids(dim, coords, mass, &allocations, parts);
    Ok(BalancedPartition {
        parts,
        allocations,
        order,
        centroids,
        preliminary_centroids: path.iter().map(|&c| prelim[c].clone()).collect(),
        membership: Some(membership.permute_columns(&path)),
    })
}

/// n-Means UP-balanced clustering of a population into `n = Σπ` clusters.
pub fn up_balanced_clustering(
    pop: &Population,
    n: usize,
    delta: Option<f64>,
    init: Option<&[Vec<f64>]>,
    seed: u64,
) -> Result<BalancedPartition> {
    if n != pop.sample_size() {
        return Err(Error::InvalidArgument(format!(
            "requested {n} clusters but probabilities sum to {}",
            pop.sample_size()
        )));
    }
    let opts = ClusteringOptions {
        delta,
        ..ClusteringOptions::default()
    };
    up_balanced_clustering_with(pop, init, seed, &opts)
}

pub fn up_balanced_clustering_with(
    pop: &Population,
    init: Option<&[Vec<f64>]>,
    seed: u64,
    opts: &ClusteringOptions,
) -> Result<BalancedPartition> {
    partition_weighted(
        pop.dim(),
        pop.coords_flat(),
        pop.pi(),
        pop.sample_size(),
        init,
        seed,
        opts,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(pi: &[f64]) -> Population {
        Population::new((1..=pi.len()).map(|i| vec![i as f64]).collect(), pi.to_vec()).unwrap()
    }

    #[test]
    fn soft_membership_counts_copies() {
        let pop = line(&[0.4, 0.6]);
        let frame = expand(&pop, 0.1).unwrap();
        let m = soft_membership(&frame, &[0, 0, 1, 1, 0, 0, 0, 0, 0, 0], 2).unwrap();
        assert_eq!(m.row(0), &[0.5, 0.5]);
        assert_eq!(m.row(1), &[1.0, 0.0]);
    }

    #[test]
    fn soft_membership_preserves_mass() {
        let pi = [0.7, 0.3, 0.4, 0.8, 0.3, 0.65, 0.45, 0.2, 0.2];
        let pop = line(&pi);
        let frame = expand(&pop, 0.05).unwrap();
        let labels: Vec<usize> = (0..frame.len()).map(|i| (i * 7) % 4).collect();
        let m = soft_membership(&frame, &labels, 4).unwrap();
        for u in 0..9 {
            let s: f64 = (0..4).map(|i| pi[u] * m.get(u, i)).sum();
            assert!((s - pi[u]).abs() < 1e-12);
        }
    }

    #[test]
    fn quota_split_examples() {
        let p = quota_split(&line(&[0.5; 4]), &[0, 1, 2, 3]).unwrap();
        assert_eq!(p.hard_labels(), vec![0, 0, 1, 1]);
        assert!(p.borders().is_empty());

        let p = quota_split(&line(&[0.6, 0.6, 0.4, 0.4]), &[0, 1, 2, 3]).unwrap();
        let b = p.borders();
        assert_eq!(b.len(), 1);
        assert_eq!((b[0].unit, b[0].left, b[0].right), (1, 0, 1));
        assert!((b[0].left_share * 0.6 - 0.4).abs() < 1e-12);
        for t in p.totals(&[0.6, 0.6, 0.4, 0.4]) {
            assert!((t - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn collinear_pairs() {
        let pop = line(&[0.5; 4]);
        let p = up_balanced_clustering(&pop, 2, None, None, 1).unwrap();
        let labels = p.hard_labels();
        assert_eq!(labels[0], labels[1]);
        assert_eq!(labels[2], labels[3]);
        assert_ne!(labels[0], labels[2]);
        let mut xs: Vec<f64> = p.centroids().iter().map(|c| c[0]).collect();
        xs.sort_by(f64::total_cmp);
        assert_eq!(xs, vec![1.5, 3.5]);
        assert!(p.borders().is_empty());
    }

    #[test]
    fn single_cluster() {
        let pop = line(&[0.25; 4]);
        let p = up_balanced_clustering(&pop, 1, None, None, 0).unwrap();
        assert_eq!(p.hard_labels(), vec![0; 4]);
        assert!((p.totals(pop.pi())[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wrong_cluster_count_is_rejected() {
        assert!(up_balanced_clustering(&line(&[0.5; 4]), 3, None, None, 0).is_err());
    }

    #[test]
    fn csv_export_has_expected_header() {
        let p = quota_split(&line(&[0.6, 0.6, 0.4, 0.4]), &[0, 1, 2, 3]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("unit,cluster,fraction,is_border\n1,1,1,false\n"));
        assert_eq!(text.lines().count(), 6);
    }
}
