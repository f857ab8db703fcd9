//! Baseline designs and the data reduction used for real populations.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::sq_dist;
use crate::population::{Population, Sample};
use crate::rng::SeededRng;

/// Values closer than this to 0 or 1 count as decided in the pivotal method.
const DECIDED: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignKind {
    Srs,
    Lpm1,
    /// GFS on a fresh uniformly random unit order per replicate.
    GfsRandom,
    Nms,
    Gms,
}

impl DesignKind {
    pub fn name(self) -> &'static str {
        match self {
            DesignKind::Srs => "srs",
            DesignKind::Lpm1 => "lpm1",
            DesignKind::GfsRandom => "gfs-random",
            DesignKind::Nms => "nms",
            DesignKind::Gms => "gms",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        [
            DesignKind::Srs,
            DesignKind::Lpm1,
            DesignKind::GfsRandom,
            DesignKind::Nms,
            DesignKind::Gms,
        ]
        .into_iter()
        .find(|d| d.name() == name)
    }
}

/// Simple random sample of size n without replacement.
pub fn srs_sample(pop: &Population, n: usize, rng: &mut SeededRng) -> Result<Sample> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size n must be at least 1".into()));
    }
    if n > pop.len() {
        return Err(Error::InfeasibleProbabilities {
            n,
            population: pop.len(),
        });
    }
    Ok(Sample::new(index::sample(rng, pop.len(), n).into_vec()))
}

fn is_open(p: f64) -> bool {
    p > DECIDED && p < 1.0 - DECIDED
}

fn nearest_open(pop: &Population, p: &[f64], u: usize) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for v in 0..pop.len() {
        if v == u || !is_open(p[v]) {
            continue;
        }
        let d = sq_dist(pop.coord(u), pop.coord(v));
        if best.is_none_or(|b| d < b.0) {
            best = Some((d, v));
        }
    }
    best.map(|b| b.1)
}

/// Local pivotal method, variant 1: a random open unit is followed along
/// nearest-neighbour links until two open units are mutual nearest
/// neighbours, and that pair competes for their combined mass.
pub fn lpm1_sample(pop: &Population, rng: &mut SeededRng) -> Sample {
    let mut p = pop.pi().to_vec();
    let mut open: Vec<usize> = (0..pop.len()).filter(|&u| is_open(p[u])).collect();
    while open.len() > 1 {
        let mut i = open[rng.random_range(0..open.len())];
        let mut j = nearest_open(pop, &p, i).expect("two open units");
        loop {
            let back = nearest_open(pop, &p, j).expect("two open units");
            if back == i || sq_dist(pop.coord(j), pop.coord(back)) == sq_dist(pop.coord(j), pop.coord(i)) {
                break;
            }
            i = j;
            j = back;
        }
        let (a, b) = (p[i], p[j]);
        let s = a + b;
        if s < 1.0 {
            if rng.random::<f64>() < b / s {
                p[i] = 0.0;
                p[j] = s;
            } else {
                p[i] = s;
                p[j] = 0.0;
            }
        } else if rng.random::<f64>() < (1.0 - b) / (2.0 - s) {
            p[i] = 1.0;
            p[j] = s - 1.0;
        } else {
            p[i] = s - 1.0;
            p[j] = 1.0;
        }
        open.retain(|&u| is_open(p[u]));
    }
    if let Some(&u) = open.first() {
        p[u] = if rng.random::<f64>() < p[u] { 1.0 } else { 0.0 };
    }
    Sample::new((0..pop.len()).filter(|&u| p[u] >= 1.0 - DECIDED).collect())
}

/// k-means (k-means++ start, Lloyd iterations) on points, then the distinct
/// observation nearest each centroid. Returns the kept row indices, sorted.
pub fn kmeans_reduce(points: &[Vec<f64>], k: usize, rng: &mut SeededRng) -> Result<Vec<usize>> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("cannot keep {k} of {n} observations")));
    }
    let mut centres = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centres[0])).collect();
    while centres.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut t = rng.random::<f64>() * total;
            d2.iter().position(|&d| {
                t -= d;
                t < 0.0
            })
            .unwrap_or(n - 1)
        } else {
            rng.random_range(0..n)
        };
        centres.push(points[next].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centres[centres.len() - 1]));
        }
    }
    let mut labels = vec![usize::MAX; n];
    for _ in 0..100 {
        let mut changed = false;
        for (u, p) in points.iter().enumerate() {
            let c = (0..k)
                .min_by(|&a, &b| sq_dist(p, &centres[a]).total_cmp(&sq_dist(p, &centres[b])))
                .expect("k ≥ 1");
            if labels[u] != c {
                labels[u] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (c, centre) in centres.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            for (d, v) in centre.iter_mut().enumerate() {
                *v = members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64;
            }
        }
    }
    let mut taken = vec![false; n];
    let mut kept = Vec::with_capacity(k);
    for centre in &centres {
        let u = (0..n)
            .filter(|&u| !taken[u])
            .min_by(|&a, &b| sq_dist(&points[a], centre).total_cmp(&sq_dist(&points[b], centre)))
            .expect("k ≤ n");
        taken[u] = true;
        kept.push(u);
    }
    kept.sort_unstable();
    Ok(kept)
}
