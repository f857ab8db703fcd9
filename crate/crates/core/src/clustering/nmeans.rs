//! Size-constrained n-means on an expanded frame.
//!
//! Pseudocopies of one unit share a coordinate, so the balanced assignment
//! step is solved as a transportation problem from units (supply = count)
//! to cluster slots (capacity = floor or ceil of N_exp/n). Successive
//! shortest paths run on the small cluster-level residual graph: moving one
//! copy of unit v from cluster a to b costs c(v,b) − c(v,a).

use std::collections::BTreeSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::expand::ExpandedFrame;
use crate::error::{Error, Result};
use crate::geometry::sq_dist;
use crate::rng::{self, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NMeansOptions {
    pub max_iter: usize,
    /// Relative change in assignment cost below which Lloyd stops.
    pub tolerance: f64,
    /// k-means++ restarts when no initial centers are given.
    pub n_init: usize,
}

impl Default for NMeansOptions {
    fn default() -> Self {
        NMeansOptions {
            max_iter: 50,
            tolerance: 1e-6,
            n_init: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NMeansResult {
    pub centers: Vec<Vec<f64>>,
    /// `flow[u][i]`: pseudocopies of unit u assigned to cluster i.
    pub flow: Vec<Vec<usize>>,
    pub cost: f64,
    pub iterations: usize,
}

impl NMeansResult {
    /// Per-pseudocopy labels; copies of a unit take clusters in ascending order.
    pub fn labels(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for row in &self.flow {
            for (i, &f) in row.iter().enumerate() {
                out.extend(std::iter::repeat_n(i, f));
            }
        }
        out
    }
}

/// Slot counts: the first `total mod n` clusters take the ceiling.
pub fn slot_capacities(total: usize, n: usize) -> Vec<usize> {
    let q = total / n;
    let r = total % n;
    (0..n).map(|i| if i < r { q + 1 } else { q }).collect()
}

#[derive(Clone, Copy)]
enum Pred {
    None,
    Source,
    Move { from: usize, unit: usize },
}

/// Exact min-cost transportation of `supply` into `capacity`.
///
/// `cost` is row-major units × clusters. Returns the flow in the same layout.
pub fn balanced_transport(cost: &[f64], supply: &[usize], capacity: &[usize]) -> Vec<usize> {
    let units = supply.len();
    let k = capacity.len();
    debug_assert_eq!(cost.len(), units * k);
    debug_assert!(supply.iter().sum::<usize>() <= capacity.iter().sum::<usize>());
    let sink = k;
    let mut flow = vec![0usize; units * k];
    let mut members: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); k];
    let mut spare = capacity.to_vec();
    let mut phi = vec![0.0f64; k + 1];
    let mut d = vec![f64::INFINITY; k + 1];
    let mut pred = vec![Pred::None; k + 1];
    let mut done = vec![false; k + 1];

    for u in 0..units {
        let mut remaining = supply[u];
        while remaining > 0 {
            d.fill(f64::INFINITY);
            pred.fill(Pred::None);
            done.fill(false);
            let mut sink_from = usize::MAX;
            for b in 0..k {
                d[b] = cost[u * k + b] - phi[b];
                pred[b] = Pred::Source;
            }
            loop {
                let mut a = usize::MAX;
                for x in 0..=k {
                    if !done[x] && d[x].is_finite() && (a == usize::MAX || d[x] < d[a]) {
                        a = x;
                    }
                }
                if a == usize::MAX {
                    break;
                }
                done[a] = true;
                if a == sink {
                    break;
                }
                if spare[a] > 0 {
                    let val = d[a] + phi[a] - phi[sink];
                    if val < d[sink] || (val == d[sink] && a < sink_from) {
                        d[sink] = val;
                        sink_from = a;
                    }
                }
                for b in 0..k {
                    if b == a || done[b] {
                        continue;
                    }
                    let mut best = f64::INFINITY;
                    let mut via = usize::MAX;
                    for &v in &members[a] {
                        let c = cost[v * k + b] - cost[v * k + a];
                        if c < best {
                            best = c;
                            via = v;
                        }
                    }
                    if via == usize::MAX {
                        break;
                    }
                    let val = d[a] + best + phi[a] - phi[b];
                    if val < d[b] {
                        d[b] = val;
                        pred[b] = Pred::Move { from: a, unit: via };
                    }
                }
            }
            let target = sink_from;
            debug_assert!(target < k, "capacity exhausted");

            let mut amount = remaining.min(spare[target]);
            let mut b = target;
            while let Pred::Move { from, unit } = pred[b] {
                amount = amount.min(flow[unit * k + from]);
                b = from;
            }
            let mut b = target;
            loop {
                match pred[b] {
                    Pred::Move { from, unit } => {
                        flow[unit * k + from] -= amount;
                        if flow[unit * k + from] == 0 {
                            members[from].remove(&unit);
                        }
                        flow[unit * k + b] += amount;
                        members[b].insert(unit);
                        b = from;
                    }
                    Pred::Source => {
                        flow[u * k + b] += amount;
                        members[b].insert(u);
                        break;
                    }
                    Pred::None => unreachable!("broken predecessor chain"),
                }
            }
            spare[target] -= amount;
            remaining -= amount;

            let ds = d[sink];
            for x in 0..=k {
                phi[x] += if done[x] { d[x] } else { ds };
            }
        }
    }
    flow
}

fn cost_matrix(frame: &ExpandedFrame, centers: &[Vec<f64>]) -> Vec<f64> {
    let k = centers.len();
    let mut cost = Vec::with_capacity(frame.units() * k);
    for u in 0..frame.units() {
        let c = frame.unit_coord(u);
        cost.extend(centers.iter().map(|o| sq_dist(c, o)));
    }
    cost
}

fn flow_centers(frame: &ExpandedFrame, flow: &[usize], k: usize, fallback: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = frame.dim();
    let mut acc = vec![vec![0.0; dim]; k];
    let mut mass = vec![0usize; k];
    for u in 0..frame.units() {
        let c = frame.unit_coord(u);
        for i in 0..k {
            let f = flow[u * k + i];
            if f > 0 {
                mass[i] += f;
                for (a, x) in acc[i].iter_mut().zip(c) {
                    *a += f as f64 * x;
                }
            }
        }
    }
    acc.into_iter()
        .zip(mass)
        .enumerate()
        .map(|(i, (mut s, m))| {
            if m == 0 {
                return fallback[i].clone();
            }
            s.iter_mut().for_each(|x| *x /= m as f64);
            s
        })
        .collect()
}

fn total_cost(cost: &[f64], flow: &[usize]) -> f64 {
    cost.iter().zip(flow).map(|(c, &f)| c * f as f64).sum()
}

fn lloyd(frame: &ExpandedFrame, init: Vec<Vec<f64>>, opts: &NMeansOptions) -> NMeansResult {
    let k = init.len();
    let capacity = slot_capacities(frame.len(), k);
    let mut centers = init;
    let mut prev = f64::INFINITY;
    let mut flow = Vec::new();
    let mut iterations = 0;
    for it in 1..=opts.max_iter.max(1) {
        iterations = it;
        let cost = cost_matrix(frame, &centers);
        flow = balanced_transport(&cost, frame.counts(), &capacity);
        let value = total_cost(&cost, &flow);
        centers = flow_centers(frame, &flow, k, &centers);
        let converged = prev.is_finite() && (prev - value).abs() <= opts.tolerance * prev.max(f64::MIN_POSITIVE);
        prev = value;
        if converged || value == 0.0 {
            break;
        }
    }
    let cost = total_cost(&cost_matrix(frame, &centers), &flow);
    NMeansResult {
        centers,
        flow: flow.chunks(k).map(<[usize]>::to_vec).collect(),
        cost,
        iterations,
    }
}

/// k-means++ seeding over units weighted by their pseudocopy counts.
fn kmeans_pp(frame: &ExpandedFrame, k: usize, rng: &mut SeededRng) -> Vec<Vec<f64>> {
    let counts: Vec<f64> = frame.counts().iter().map(|&c| c as f64).collect();
    let first = WeightedIndex::new(&counts).expect("counts are positive").sample(rng);
    let mut centers = vec![frame.unit_coord(first).to_vec()];
    let mut d2: Vec<f64> = (0..frame.units())
        .map(|u| sq_dist(frame.unit_coord(u), &centers[0]))
        .collect();
    while centers.len() < k {
        let weights: Vec<f64> = d2.iter().zip(&counts).map(|(d, c)| d * c).collect();
        let pick = match WeightedIndex::new(&weights) {
            Ok(w) => w.sample(rng),
            Err(_) => WeightedIndex::new(&counts).expect("counts are positive").sample(rng),
        };
        let c = frame.unit_coord(pick).to_vec();
        for (u, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(frame.unit_coord(u), &c));
        }
        centers.push(c);
    }
    centers
}

/// Balanced n-means. With `init`, Lloyd starts from those centers in one
/// run; otherwise the best of `n_init` k-means++ restarts is kept.
pub fn balanced_nmeans(
    frame: &ExpandedFrame,
    k: usize,
    init: Option<&[Vec<f64>]>,
    seed: u64,
    opts: &NMeansOptions,
) -> Result<NMeansResult> {
    if k == 0 {
        return Err(Error::InvalidArgument("number of clusters must be at least 1".into()));
    }
    if frame.len() < k {
        return Err(Error::InvalidArgument(format!(
            "expanded frame has {} points, fewer than {k} clusters",
            frame.len()
        )));
    }
    if let Some(init) = init {
        if init.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: init.len(),
            });
        }
        if let Some(bad) = init.iter().find(|c| c.len() != frame.dim()) {
            return Err(Error::DimensionMismatch {
                expected: frame.dim(),
                found: bad.len(),
            });
        }
        return Ok(lloyd(frame, init.to_vec(), opts));
    }
    let runs: Vec<NMeansResult> = (0..opts.n_init.max(1) as u64)
        .into_par_iter()
        .map(|restart| {
            let mut r = rng::stream(rng::derive(seed, restart), rng::tag::NMEANS_INIT);
            lloyd(frame, kmeans_pp(frame, k, &mut r), opts)
        })
        .collect();
    Ok(runs
        .into_iter()
        .reduce(|best, r| if r.cost < best.cost { r } else { best })
        .expect("at least one restart"))
}

/// Per-pseudocopy labels in `0..n` from a seeded balanced n-means.
pub fn constrained_nmeans(frame: &ExpandedFrame, n: usize, seed: u64) -> Result<Vec<usize>> {
    Ok(balanced_nmeans(frame, n, None, seed, &NMeansOptions::default())?.labels())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::expand::expand_weighted;

    fn frame(points: &[[f64; 2]], counts: &[f64]) -> ExpandedFrame {
        let flat: Vec<f64> = points.iter().flat_map(|p| p.iter().copied()).collect();
        expand_weighted(2, &flat, counts, 1.0, 1_000_000).unwrap()
    }

    fn brute_force(cost: &[f64], supply: &[usize], capacity: &[usize]) -> f64 {
        // Enumerate per-copy assignments.
        let k = capacity.len();
        let copies: Vec<usize> = supply
            .iter()
            .enumerate()
            .flat_map(|(u, &s)| std::iter::repeat_n(u, s))
            .collect();
        fn rec(i: usize, copies: &[usize], cost: &[f64], k: usize, spare: &mut [usize], acc: f64, best: &mut f64) {
            if i == copies.len() {
                *best = best.min(acc);
                return;
            }
            for b in 0..k {
                if spare[b] > 0 {
                    spare[b] -= 1;
                    rec(i + 1, copies, cost, k, spare, acc + cost[copies[i] * k + b], best);
                    spare[b] += 1;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(0, &copies, cost, k, &mut capacity.to_vec(), 0.0, &mut best);
        best
    }

    #[test]
    fn capacities_differ_by_at_most_one() {
        assert_eq!(slot_capacities(10, 3), vec![4, 3, 3]);
        assert_eq!(slot_capacities(9, 3), vec![3, 3, 3]);
    }

    #[test]
    fn transport_matches_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..40 {
            let units = r.random_range(1..5);
            let k = r.random_range(1..4);
            let supply: Vec<usize> = (0..units).map(|_| r.random_range(1..3)).collect();
            let total: usize = supply.iter().sum();
            if total < k {
                continue;
            }
            let capacity = slot_capacities(total, k);
            let cost: Vec<f64> = (0..units * k).map(|_| r.random_range(0.0..10.0)).collect();
            let flow = balanced_transport(&cost, &supply, &capacity);
            for u in 0..units {
                assert_eq!(flow[u * k..(u + 1) * k].iter().sum::<usize>(), supply[u]);
            }
            for b in 0..k {
                let load: usize = (0..units).map(|u| flow[u * k + b]).sum();
                assert_eq!(load, capacity[b]);
            }
            let got = total_cost(&cost, &flow);
            let want = brute_force(&cost, &supply, &capacity);
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn square_corners_split_into_edge_pairs() {
        let f = frame(&[[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [1.0, 2.0]], &[1.0; 4]);
        let labels = constrained_nmeans(&f, 2, 11).unwrap();
        assert_eq!(labels[0], labels[1]);
        assert_eq!(labels[2], labels[3]);
        assert_ne!(labels[0], labels[2]);
    }

    #[test]
    fn trivial_cluster_counts() {
        let f = frame(&[[0.0, 0.0], [1.0, 0.0], [3.0, 1.0]], &[1.0; 3]);
        assert_eq!(constrained_nmeans(&f, 1, 0).unwrap(), vec![0, 0, 0]);
        let mut l = constrained_nmeans(&f, 3, 0).unwrap();
        l.sort();
        assert_eq!(l, vec![0, 1, 2]);
    }

    #[test]
    fn coincident_points_are_allowed() {
        let f = frame(&[[0.5, 0.5]], &[6.0]);
        let r = balanced_nmeans(&f, 3, None, 1, &NMeansOptions::default()).unwrap();
        assert_eq!(r.flow[0], vec![2, 2, 2]);
    }

    #[test]
    fn seeded_init_is_respected() {
        let f = frame(&[[0.0, 0.0], [0.1, 0.0], [5.0, 0.0], [5.1, 0.0]], &[1.0; 4]);
        let init = vec![vec![5.0, 0.0], vec![0.0, 0.0]];
        let r = balanced_nmeans(&f, 2, Some(&init), 0, &NMeansOptions::default()).unwrap();
        assert_eq!(r.labels(), vec![1, 1, 0, 0]);
    }
}
