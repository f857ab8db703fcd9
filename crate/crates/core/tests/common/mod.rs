#![allow(dead_code)]

use rand_distr::{Distribution, Normal};
use spreadsamp::harness::{gen_population, Layout, PopulationSpec, ProbabilityMode};
use spreadsamp::{rng, Population};

pub const EXAM1_PI: [f64; 9] = [0.7, 0.3, 0.4, 0.8, 0.3, 0.65, 0.45, 0.2, 0.2];

/// PopExam1 on a line, so lexicographic order is the unit order.
pub fn exam1() -> Population {
    Population::new((1..=9).map(|i| vec![i as f64, 0.0]).collect(), EXAM1_PI.to_vec()).unwrap()
}

pub fn layouts() -> Vec<Layout> {
    vec![Layout::Gridded, Layout::Random, Layout::clustered()]
}

pub fn study(layout: Layout, n: usize, up: bool, seed: u64) -> Population {
    let probability = if up {
        ProbabilityMode::UpGradient { n }
    } else {
        ProbabilityMode::Ep { n }
    };
    gen_population(&PopulationSpec {
        layout,
        size: 100,
        probability,
        seed,
    })
    .unwrap()
}

pub fn grid(side: usize, n: usize) -> Population {
    study_side(side, n)
}

fn study_side(side: usize, n: usize) -> Population {
    let pts: Vec<[f64; 2]> = (0..side * side)
        .map(|i| [((i % side) as f64 + 0.5) / side as f64, ((i / side) as f64 + 0.5) / side as f64])
        .collect();
    Population::equal_probability(&pts, n).unwrap()
}

/// Two Gaussian blobs of `per` units, centres `sep` apart on y = 0.5.
pub fn two_blobs(per: usize, sep: f64, sd: f64, seed: u64) -> Vec<[f64; 2]> {
    let mut r = rng::stream(seed, 99);
    let nd = Normal::new(0.0, sd).unwrap();
    (0..2 * per)
        .map(|i| {
            let cx = if i < per { 0.5 - sep / 2.0 } else { 0.5 + sep / 2.0 };
            [cx + nd.sample(&mut r), 0.5 + nd.sample(&mut r)]
        })
        .collect()
}

pub fn nearest(pts: &[[f64; 2]], target: [f64; 2], exclude: &[usize]) -> usize {
    (0..pts.len())
        .filter(|u| !exclude.contains(u))
        .min_by(|&a, &b| {
            let d = |u: usize| (pts[u][0] - target[0]).hypot(pts[u][1] - target[1]);
            d(a).total_cmp(&d(b))
        })
        .unwrap()
}

/// All k-subsets of 0..n in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// All permutations of 0..n.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}
