//! Ranking maps that order zones within a cluster and units within a zone.

use std::cmp::Ordering;
use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng;

pub const HILBERT_ORDER: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RankingRule {
    HorizontalLex,
    VerticalLex,
    Random,
    RadialFromOrigin,
    DiagonalProjection,
    RadialFromCentroid,
    CentroidalPolar,
    MaxCoordinate,
    HilbertCurve,
}

impl RankingRule {
    pub const ALL: [RankingRule; 9] = [
        RankingRule::HorizontalLex,
        RankingRule::VerticalLex,
        RankingRule::Random,
        RankingRule::RadialFromOrigin,
        RankingRule::DiagonalProjection,
        RankingRule::RadialFromCentroid,
        RankingRule::CentroidalPolar,
        RankingRule::MaxCoordinate,
        RankingRule::HilbertCurve,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RankingRule::HorizontalLex => "horizontal-lex",
            RankingRule::VerticalLex => "vertical-lex",
            RankingRule::Random => "random",
            RankingRule::RadialFromOrigin => "radial-origin",
            RankingRule::DiagonalProjection => "diagonal",
            RankingRule::RadialFromCentroid => "radial-centroid",
            RankingRule::CentroidalPolar => "centroidal-polar",
            RankingRule::MaxCoordinate => "max-coordinate",
            RankingRule::HilbertCurve => "hilbert",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == name)
    }
}

/// First two coordinates, padding with 0.
fn xy(p: &[f64]) -> (f64, f64) {
    (p.first().copied().unwrap_or(0.0), p.get(1).copied().unwrap_or(0.0))
}

/// Hilbert index of cell (x, y) on a 2^order grid.
pub fn hilbert_index(order: u32, mut x: u64, mut y: u64) -> u64 {
    let n = 1u64 << order;
    let mut d = 0u64;
    let mut s = n / 2;
    while s > 0 {
        let rx = u64::from(x & s > 0);
        let ry = u64::from(y & s > 0);
        d += s * s * ((3 * rx) ^ ry);
        if ry == 0 {
            if rx == 1 {
                x = n - 1 - x;
                y = n - 1 - y;
            }
            std::mem::swap(&mut x, &mut y);
        }
        s /= 2;
    }
    d
}

fn cell(v: f64, lo: f64, hi: f64, cells: u64) -> u64 {
    if hi <= lo {
        return 0;
    }
    (((v - lo) / (hi - lo) * cells as f64).floor() as u64).min(cells - 1)
}

/// Permutation listing point indices from rank 1 to rank k. Every rule
/// breaks ties by (x, y) and then by input position.
pub fn rank_points(points: &[Vec<f64>], rule: RankingRule, seed: u64) -> Vec<usize> {
    let k = points.len();
    let mut idx: Vec<usize> = (0..k).collect();
    if k <= 1 {
        return idx;
    }
    if rule == RankingRule::Random {
        idx.shuffle(&mut rng::stream(seed, rng::tag::RANKING));
        return idx;
    }
    let pts: Vec<(f64, f64)> = points.iter().map(|p| xy(p)).collect();
    let cx = pts.iter().map(|p| p.0).sum::<f64>() / k as f64;
    let cy = pts.iter().map(|p| p.1).sum::<f64>() / k as f64;

    let keys: Vec<(f64, f64)> = match rule {
        RankingRule::HorizontalLex | RankingRule::VerticalLex | RankingRule::Random => vec![(0.0, 0.0); k],
        RankingRule::RadialFromOrigin => pts.iter().map(|&(x, y)| (x.hypot(y), 0.0)).collect(),
        RankingRule::DiagonalProjection => pts.iter().map(|&(x, y)| (x + y, 0.0)).collect(),
        RankingRule::RadialFromCentroid => pts.iter().map(|&(x, y)| ((x - cx).hypot(y - cy), 0.0)).collect(),
        RankingRule::CentroidalPolar => pts
            .iter()
            .map(|&(x, y)| {
                let (dx, dy) = (x - cx, y - cy);
                let mut a = dy.atan2(dx);
                if a < 0.0 {
                    a += TAU;
                }
                if a >= TAU {
                    a = 0.0;
                }
                (a, dx.hypot(dy))
            })
            .collect(),
        RankingRule::MaxCoordinate => pts.iter().map(|&(x, y)| (x.max(y), 0.0)).collect(),
        RankingRule::HilbertCurve => {
            let cells = 1u64 << HILBERT_ORDER;
            let (x0, x1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.0), a.1.max(p.0)));
            let (y0, y1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.1), a.1.max(p.1)));
            pts.iter()
                .map(|&(x, y)| {
                    let h = hilbert_index(HILBERT_ORDER, cell(x, x0, x1, cells), cell(y, y0, y1, cells));
                    (h as f64, 0.0)
                })
                .collect()
        }
    };
    let lex = |a: usize, b: usize| -> Ordering {
        let (pa, pb) = (pts[a], pts[b]);
        match rule {
            RankingRule::VerticalLex => pa.1.total_cmp(&pb.1).then(pa.0.total_cmp(&pb.0)),
            _ => pa.0.total_cmp(&pb.0).then(pa.1.total_cmp(&pb.1)),
        }
    };
    idx.sort_by(|&a, &b| {
        keys[a]
            .0
            .total_cmp(&keys[b].0)
            .then(keys[a].1.total_cmp(&keys[b].1))
            .then_with(|| lex(a, b))
            .then(a.cmp(&b))
    });
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, f64)]) -> Vec<Vec<f64>> {
        v.iter().map(|&(x, y)| vec![x, y]).collect()
    }

    #[test]
    fn trivial_sets() {
        for rule in RankingRule::ALL {
            assert_eq!(rank_points(&[], rule, 0), Vec::<usize>::new());
            assert_eq!(rank_points(&pts(&[(3.0, 1.0)]), rule, 0), vec![0]);
        }
    }

    #[test]
    fn polar_order_about_centroid() {
        let p = pts(&[(-1.0, 0.0), (0.0, -1.0), (0.0, 1.0), (1.0, 0.0)]);
        assert_eq!(rank_points(&p, RankingRule::CentroidalPolar, 0), vec![3, 2, 0, 1]);
    }

    #[test]
    fn lexicographic_and_projections() {
        let p = pts(&[(2.0, 0.0), (0.0, 0.0), (1.0, 0.0)]);
        assert_eq!(rank_points(&p, RankingRule::HorizontalLex, 0), vec![1, 2, 0]);
        let p = pts(&[(0.0, 2.0), (1.0, 0.0), (0.0, 1.0)]);
        assert_eq!(rank_points(&p, RankingRule::VerticalLex, 0), vec![1, 2, 0]);
        let p = pts(&[(0.9, 0.0), (0.2, 0.2), (0.0, 0.5)]);
        assert_eq!(rank_points(&p, RankingRule::DiagonalProjection, 0), vec![1, 2, 0]);
        assert_eq!(rank_points(&p, RankingRule::MaxCoordinate, 0), vec![1, 2, 0]);
        assert_eq!(rank_points(&p, RankingRule::RadialFromOrigin, 0), vec![1, 2, 0]);
    }

    #[test]
    fn hilbert_visits_quadrants_in_curve_order() {
        assert_eq!(hilbert_index(1, 0, 0), 0);
        assert_eq!(hilbert_index(1, 0, 1), 1);
        assert_eq!(hilbert_index(1, 1, 1), 2);
        assert_eq!(hilbert_index(1, 1, 0), 3);
        let p = pts(&[(1.0, 0.0), (1.0, 1.0), (0.0, 0.0), (0.0, 1.0)]);
        assert_eq!(rank_points(&p, RankingRule::HilbertCurve, 0), vec![2, 3, 1, 0]);
    }

    #[test]
    fn rules_are_permutations_and_random_is_seeded() {
        let p: Vec<Vec<f64>> = (0..20).map(|i| vec![(i * 7 % 20) as f64, (i * 3 % 11) as f64]).collect();
        for rule in RankingRule::ALL {
            let mut r = rank_points(&p, rule, 5);
            assert_eq!(r, rank_points(&p, rule, 5));
            r.sort_unstable();
            assert_eq!(r, (0..20).collect::<Vec<_>>());
        }
        assert_ne!(
            rank_points(&p, RankingRule::Random, 1),
            rank_points(&p, RankingRule::Random, 2)
        );
        assert_eq!(RankingRule::parse("hilbert"), Some(RankingRule::HilbertCurve));
    }
}
