//! n-Means spatial sampling.
//!
//! Every UP-balanced cluster becomes one GFS stack. Inside a cluster the
//! mass is split into m zones of 1/m each; zones are ordered by ψ1 and the
//! units of each zone by ψ2, with the same rule in every cluster, so one
//! uniform r lands in the same zone rank everywhere.

pub mod ranking;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::clustering::{
    partition_weighted, quota_cut, up_balanced_clustering_with, BalancedPartition, ClusteringOptions,
};
use crate::error::{Error, Result};
use crate::geometry::weighted_mean;
use crate::gfs::{build_bars, BarLayout};
use crate::population::{Population, Sample};
use crate::rng;

pub use ranking::{rank_points, RankingRule};

/// Slack allowed when checking that stacks line up with clusters.
const STACK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmsConfig {
    pub m: usize,
    pub psi1: RankingRule,
    pub psi2: RankingRule,
    pub clustering: ClusteringOptions,
}

impl Default for NmsConfig {
    fn default() -> Self {
        NmsConfig {
            m: 4,
            psi1: RankingRule::CentroidalPolar,
            psi2: RankingRule::CentroidalPolar,
            clustering: ClusteringOptions::default(),
        }
    }
}

/// One zone of a cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    /// Position of the zone in the zoning path, before ranking.
    pub label: usize,
    pub centroid: Vec<f64>,
    /// `(unit, fraction of the unit's π)` held by the zone.
    pub shares: Vec<(usize, f64)>,
    /// Units placed in Ψ for this zone, in ψ2 order. Cluster borders are
    /// excluded since they sit at the cluster ends.
    pub units: Vec<usize>,
}

/// Zones of one cluster in ψ1 rank order, plus its border units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPlan {
    pub left_border: Option<usize>,
    pub right_border: Option<usize>,
    pub zones: Vec<Zone>,
}

/// Splits a cluster's allocation into m zones of mass 1/m.
pub fn zone_cluster(
    pop: &Population,
    partition: &BalancedPartition,
    cluster: usize,
    m: usize,
    seed: u64,
    opts: &ClusteringOptions,
) -> Result<Vec<Zone>> {
    if m == 0 {
        return Err(Error::InvalidArgument("zone count m must be at least 1".into()));
    }
    let members = partition.members(cluster);
    if members.is_empty() {
        return Err(Error::InvalidArgument(format!("cluster {cluster} is empty")));
    }
    let dim = pop.dim();
    let frac: Vec<f64> = members.iter().map(|&u| partition.fraction(u, cluster)).collect();
    let centroid_of = |shares: &[(usize, f64)]| {
        weighted_mean(shares.iter().map(|&(u, f)| (pop.coord(u), pop.pi()[u] * f)), dim)
            .unwrap_or_else(|| vec![0.0; dim])
    };
    if m == 1 {
        let shares: Vec<(usize, f64)> = members.iter().copied().zip(frac.iter().copied()).collect();
        return Ok(vec![Zone {
            label: 0,
            centroid: centroid_of(&shares),
            shares,
            units: Vec::new(),
        }]);
    }

    let coords: Vec<f64> = members.iter().flat_map(|&u| pop.coord(u).iter().copied()).collect();
    let mass: Vec<f64> = members
        .iter()
        .zip(&frac)
        .map(|(&u, f)| pop.pi()[u] * f * m as f64)
        .collect();
    let allocations: Vec<Vec<(usize, f64)>> = match partition_weighted(dim, &coords, &mass, m, None, seed, opts) {
        Ok(sub) => sub.allocations().to_vec(),
        // Degenerate geometry (e.g. all members coincide): cut along Φ.
        Err(_) => quota_cut(&(0..members.len()).collect::<Vec<_>>(), &mass, m),
    };
    let mut zones: Vec<Zone> = (0..m)
        .map(|label| Zone {
            label,
            centroid: Vec::new(),
            shares: Vec::new(),
            units: Vec::new(),
        })
        .collect();
    for (k, alloc) in allocations.iter().enumerate() {
        for &(z, f) in alloc {
            zones[z].shares.push((members[k], frac[k] * f));
        }
    }
    for z in &mut zones {
        z.centroid = centroid_of(&z.shares);
    }
    Ok(zones)
}

/// Ψ from the cluster plans: per cluster, left border, zone units, right
/// border, with repeats inside a cluster and at seams collapsed.
pub fn assemble_total_order(partition: &BalancedPartition, plans: &[ClusterPlan]) -> Result<Vec<usize>> {
    let size = partition.units();
    let mut order: Vec<usize> = Vec::with_capacity(size);
    let mut seen = vec![false; size];
    for plan in plans {
        let mut block: Vec<usize> = Vec::new();
        let mut in_block = vec![false; size];
        // A unit split between zones closes the earlier-ranked one, so it
        // sits at the seam when the two zones are adjacent in rank.
        let mut later = vec![0usize; size];
        for z in &plan.zones {
            for &u in &z.units {
                later[u] += 1;
            }
        }
        let mut candidates: Vec<usize> = plan.left_border.into_iter().collect();
        for z in &plan.zones {
            for &u in &z.units {
                later[u] -= 1;
            }
            candidates.extend(z.units.iter().copied().filter(|&u| later[u] == 0));
            candidates.extend(z.units.iter().copied().filter(|&u| later[u] > 0));
        }
        candidates.extend(plan.right_border);
        for u in candidates {
            if !in_block[u] {
                in_block[u] = true;
                block.push(u);
            }
        }
        for (k, &u) in block.iter().enumerate() {
            if seen[u] {
                if k == 0 && order.last() == Some(&u) {
                    continue;
                }
                return Err(Error::InconsistentBorders { unit: u });
            }
            seen[u] = true;
            order.push(u);
        }
    }
    if let Some(u) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidArgument(format!("unit {} is missing from the total order", u + 1)));
    }
    Ok(order)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmsDesign {
    pub config: NmsConfig,
    pub seed: u64,
    pub partition: BalancedPartition,
    pub plans: Vec<ClusterPlan>,
    order: Vec<usize>,
    layout: BarLayout,
}

fn rank_seed(seed: u64, cluster: usize, zone: Option<usize>) -> u64 {
    let salt = (cluster as u64) << 32 | zone.map_or(0, |z| z as u64 + 1);
    rng::derive(rng::derive(seed, rng::tag::RANKING), salt)
}

/// Border units of each cluster, checked for path adjacency.
fn cluster_borders(partition: &BalancedPartition) -> Result<Vec<(Option<usize>, Option<usize>)>> {
    let mut ends = vec![(None, None); partition.parts()];
    for (u, a) in partition.allocations().iter().enumerate() {
        match a.len() {
            1 => {}
            2 if a[1].0 == a[0].0 + 1 => {
                let (l, r) = (a[0].0, a[1].0);
                if ends[l].1.is_some() || ends[r].0.is_some() {
                    return Err(Error::InconsistentBorders { unit: u });
                }
                ends[l].1 = Some(u);
                ends[r].0 = Some(u);
            }
            _ => return Err(Error::InconsistentBorders { unit: u }),
        }
    }
    Ok(ends)
}

/// Orders units of a zone by ψ2.
pub fn order_zone_units(pop: &Population, units: &[usize], rule: RankingRule, seed: u64) -> Vec<usize> {
    let pts: Vec<Vec<f64>> = units.iter().map(|&u| pop.coord(u).to_vec()).collect();
    rank_points(&pts, rule, seed).into_iter().map(|k| units[k]).collect()
}

/// Orders zones by ψ1 applied to their centroids.
pub fn order_zones(zones: Vec<Zone>, rule: RankingRule, seed: u64) -> Vec<Zone> {
    let pts: Vec<Vec<f64>> = zones.iter().map(|z| z.centroid.clone()).collect();
    let rank = rank_points(&pts, rule, seed);
    let mut slots: Vec<Option<Zone>> = zones.into_iter().map(Some).collect();
    rank.into_iter().map(|k| slots[k].take().expect("permutation")).collect()
}

impl NmsDesign {
    /// Builds a design on a given partition.
    pub fn from_partition(pop: &Population, partition: BalancedPartition, config: NmsConfig, seed: u64) -> Result<Self> {
        if config.m == 0 {
            return Err(Error::InvalidArgument("zone count m must be at least 1".into()));
        }
        if partition.units() != pop.len() {
            return Err(Error::DimensionMismatch {
                expected: pop.len(),
                found: partition.units(),
            });
        }
        let ends = cluster_borders(&partition)?;
        let mut plans = Vec::with_capacity(partition.parts());
        for (i, &(left, right)) in ends.iter().enumerate() {
            let zoning_seed = rng::derive(rng::derive(seed, rng::tag::ZONING), i as u64);
            let zones = zone_cluster(pop, &partition, i, config.m, zoning_seed, &config.clustering)?;
            let mut zones = order_zones(zones, config.psi1, rank_seed(seed, i, None));
            for (rank, z) in zones.iter_mut().enumerate() {
                let inner: Vec<usize> = z
                    .shares
                    .iter()
                    .map(|s| s.0)
                    .filter(|&u| Some(u) != left && Some(u) != right)
                    .collect();
                z.units = order_zone_units(pop, &inner, config.psi2, rank_seed(seed, i, Some(rank)));
            }
            plans.push(ClusterPlan {
                left_border: left,
                right_border: right,
                zones,
            });
        }
        let order = assemble_total_order(&partition, &plans)?;
        let layout = build_bars(pop, &order)?;
        let design = NmsDesign {
            config,
            seed,
            partition,
            plans,
            order,
            layout,
        };
        design.check_stacks(pop)?;
        Ok(design)
    }

    /// Recomputes Ψ and the bar layout after the plans were edited.
    pub fn rebuild(&mut self, pop: &Population) -> Result<()> {
        self.order = assemble_total_order(&self.partition, &self.plans)?;
        self.layout = build_bars(pop, &self.order)?;
        self.check_stacks(pop)
    }

    /// Every cluster must coincide with one stack.
    pub fn check_stacks(&self, pop: &Population) -> Result<()> {
        if self.layout.stacks() != self.partition.parts() {
            return Err(Error::InvalidArgument("stack count differs from cluster count".into()));
        }
        for p in self.layout.pieces() {
            let share = self.partition.fraction(p.unit, p.stack) * pop.pi()[p.unit];
            if p.len() > share + STACK_TOLERANCE {
                return Err(Error::InconsistentBorders { unit: p.unit });
            }
        }
        Ok(())
    }

    pub fn total_order(&self) -> &[usize] {
        &self.order
    }

    pub fn layout(&self) -> &BarLayout {
        &self.layout
    }

    pub fn m(&self) -> usize {
        self.config.m
    }

    /// Zones as they fall on the stack: zone j of cluster i is whatever
    /// covers ((j−1)/m, j/m] of stack i. Entries are `(unit, fraction of π)`.
    pub fn realized_zones(&self, pop: &Population, cluster: usize) -> Vec<Vec<(usize, f64)>> {
        let m = self.config.m;
        let mut zones = vec![Vec::new(); m];
        for p in self.layout.stack_pieces(cluster) {
            for (j, zone) in zones.iter_mut().enumerate() {
                let lo = j as f64 / m as f64;
                let hi = (j + 1) as f64 / m as f64;
                let overlap = p.end.min(hi) - p.start.max(lo);
                if overlap > STACK_TOLERANCE {
                    zone.push((p.unit, overlap / pop.pi()[p.unit]));
                }
            }
        }
        zones
    }

    pub fn sample(&self, r: f64) -> Sample {
        self.layout.draw_sample(r)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }
}

/// Clusters the population and builds the design.
pub fn nms_design(pop: &Population, config: NmsConfig, seed: u64) -> Result<NmsDesign> {
    let partition = up_balanced_clustering_with(pop, None, rng::derive(seed, rng::tag::NMEANS_INIT), &config.clustering)?;
    NmsDesign::from_partition(pop, partition, config, seed)
}

/// One draw from the design at r ∈ [0, 1).
pub fn nms_sample(design: &NmsDesign, r: f64) -> Sample {
    design.sample(r)
}
