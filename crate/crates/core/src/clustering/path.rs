//! Open-path ordering of centroids and within-cluster alignment.

use crate::geometry::dist;

const TWO_OPT_PASSES: usize = 1000;

fn path_length(points: &[Vec<f64>], order: &[usize]) -> f64 {
    order.windows(2).map(|w| dist(&points[w[0]], &points[w[1]])).sum()
}

fn nearest_neighbour(points: &[Vec<f64>], start: usize) -> Vec<usize> {
    let n = points.len();
    let mut used = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut cur = start;
    used[cur] = true;
    order.push(cur);
    for _ in 1..n {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for j in 0..n {
            if !used[j] {
                let d = dist(&points[cur], &points[j]);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
        }
        used[best] = true;
        order.push(best);
        cur = best;
    }
    order
}

/// 2-opt for an open path: reversing `order[i..=j]` swaps the edges at its
/// ends; a reversal touching either end of the path changes only one edge.
fn two_opt(points: &[Vec<f64>], order: &mut [usize]) {
    let n = order.len();
    if n < 3 {
        return;
    }
    let d = |a: usize, b: usize| dist(&points[a], &points[b]);
    let eps = 1e-12 * (1.0 + path_length(points, order));
    for _ in 0..TWO_OPT_PASSES {
        let mut improved = false;
        for i in 0..n - 1 {
            for j in i + 1..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let mut delta = 0.0;
                if i > 0 {
                    delta += d(order[i - 1], order[j]) - d(order[i - 1], order[i]);
                }
                if j + 1 < n {
                    delta += d(order[i], order[j + 1]) - d(order[j], order[j + 1]);
                }
                if delta < -eps {
                    order[i..=j].reverse();
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
}

/// Approximate shortest open path through `centroids`: nearest-neighbour
/// tours from every start, the shortest kept, then 2-opt to a local optimum.
pub fn order_clusters(centroids: &[Vec<f64>]) -> Vec<usize> {
    let n = centroids.len();
    if n == 0 {
        return Vec::new();
    }
    let mut best = nearest_neighbour(centroids, 0);
    let mut best_len = path_length(centroids, &best);
    for s in 1..n {
        let cand = nearest_neighbour(centroids, s);
        let len = path_length(centroids, &cand);
        if len < best_len {
            best = cand;
            best_len = len;
        }
    }
    two_opt(centroids, &mut best);
    best
}

fn nn_dist(coords: &dyn Fn(usize) -> Vec<f64>, unit: usize, others: &[usize]) -> Option<f64> {
    let c = coords(unit);
    others.iter().map(|&o| dist(&c, &coords(o))).reduce(f64::min)
}

/// Orders each block by (distance to predecessor block) − (distance to
/// successor block), pinning the member nearest the predecessor first and the
/// member nearest the successor last. Blocks are given in path order.
pub fn align_blocks(blocks: &[Vec<usize>], coord: impl Fn(usize) -> Vec<f64>) -> Vec<Vec<usize>> {
    let coord: &dyn Fn(usize) -> Vec<f64> = &coord;
    let mut out = Vec::with_capacity(blocks.len());
    for (i, block) in blocks.iter().enumerate() {
        let pred = if i > 0 && !blocks[i - 1].is_empty() { Some(&blocks[i - 1]) } else { None };
        let succ = blocks.get(i + 1).filter(|b| !b.is_empty());
        let mut keyed: Vec<(usize, f64, f64)> = block
            .iter()
            .map(|&u| {
                let dp = pred.and_then(|p| nn_dist(coord, u, p)).unwrap_or(0.0);
                let ds = succ.and_then(|s| nn_dist(coord, u, s)).unwrap_or(0.0);
                (u, dp, ds)
            })
            .collect();
        keyed.sort_by(|a, b| (a.1 - a.2).total_cmp(&(b.1 - b.2)).then(a.0.cmp(&b.0)));

        let mut first = None;
        if pred.is_some() {
            first = keyed
                .iter()
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                .map(|k| k.0);
        }
        let mut last = None;
        if succ.is_some() {
            last = keyed
                .iter()
                .filter(|k| Some(k.0) != first || keyed.len() == 1)
                .min_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)))
                .map(|k| k.0);
        }
        let mut seq = Vec::with_capacity(block.len());
        if let Some(f) = first {
            seq.push(f);
        }
        seq.extend(keyed.iter().map(|k| k.0).filter(|&u| Some(u) != first && Some(u) != last));
        if let Some(l) = last {
            if Some(l) != first {
                seq.push(l);
            }
        }
        out.push(seq);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
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

    #[test]
    fn collinear_centroids_give_monotone_order() {
        for shuffle in permutations(4) {
            let pts: Vec<Vec<f64>> = shuffle.iter().map(|&i| vec![i as f64 + 1.0, 0.0]).collect();
            let order = order_clusters(&pts);
            let xs: Vec<f64> = order.iter().map(|&i| pts[i][0]).collect();
            assert!(
                xs == vec![1.0, 2.0, 3.0, 4.0] || xs == vec![4.0, 3.0, 2.0, 1.0],
                "{xs:?}"
            );
        }
    }

    #[test]
    fn small_paths() {
        assert_eq!(order_clusters(&[vec![0.0]]), vec![0]);
        let o = order_clusters(&[vec![0.0], vec![1.0]]);
        assert_eq!(o.len(), 2);
    }

    #[test]
    fn result_is_two_opt_local_optimum_and_near_exhaustive() {
        use rand::{Rng, SeedableRng};
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let pts: Vec<Vec<f64>> = (0..6).map(|_| vec![r.random(), r.random()]).collect();
            let order = order_clusters(&pts);
            let len = path_length(&pts, &order);
            let mut copy = order.clone();
            two_opt(&pts, &mut copy);
            assert_eq!(copy, order);
            let best = permutations(6)
                .iter()
                .map(|p| path_length(&pts, p))
                .fold(f64::INFINITY, f64::min);
            assert!(len <= best * 1.25 + 1e-12);
        }
    }

    #[test]
    fn blocks_are_pinned_toward_neighbours() {
        let xs = [0.0, 1.0, 2.0, 10.0, 11.0, 12.0, 20.0, 21.0];
        let coord = |u: usize| vec![xs[u]];
        let blocks = vec![vec![1, 0, 2], vec![5, 3, 4], vec![7, 6]];
        let aligned = align_blocks(&blocks, coord);
        assert_eq!(aligned, vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7]]);
    }
}
