//! Minimum-cost perfect matching between sample units and centroids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::dist;

/// Bijection from sample positions to centroids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// `sigma[i]` is the centroid matched to the i-th sample unit.
    pub sigma: Vec<usize>,
    /// Σ Euclidean distances of matched pairs.
    pub cost: f64,
}

impl Assignment {
    /// Sample position matched to each centroid.
    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0; self.sigma.len()];
        for (i, &c) in self.sigma.iter().enumerate() {
            inv[c] = i;
        }
        inv
    }
}

/// Shortest augmenting path Hungarian method on a square row-major matrix.
/// Returns the row → column matching and the column duals used to detect
/// tight edges.
fn hungarian(cost: &[f64], n: usize) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    // 1-based arrays with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        row_to_col[p[j] - 1] = j - 1;
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Re-routes `owner` so row `row` can take column `target`, using only tight
/// edges and rows after `row`. `free` is the column released by `row`.
fn repair(
    tight: &[Vec<bool>],
    owner_of: &mut [usize],
    col_of: &mut [usize],
    row: usize,
    target: usize,
) -> bool {
    let n = tight.len();
    let displaced = owner_of[target];
    let free = col_of[row];
    // DFS for an alternating path from `displaced` to `free`.
    let mut visited = vec![false; n];
    let mut path_cols: Vec<usize> = Vec::new();
    fn dfs(
        r: usize,
        tight: &[Vec<bool>],
        owner_of: &[usize],
        row: usize,
        target: usize,
        free: usize,
        visited: &mut [bool],
        path: &mut Vec<usize>,
    ) -> bool {
        for c in 0..tight.len() {
            if !tight[r][c] || c == target || visited[c] {
                continue;
            }
            let o = owner_of[c];
            if c != free && o <= row {
                continue;
            }
            visited[c] = true;
            path.push(c);
            if c == free || dfs(o, tight, owner_of, row, target, free, visited, path) {
                return true;
            }
            path.pop();
        }
        false
    }
    if !dfs(displaced, tight, owner_of, row, target, free, &mut visited, &mut path_cols) {
        return false;
    }
    // Shift along the path: displaced takes path[0], its owner takes path[1], …
    let mut r = displaced;
    for &c in &path_cols {
        let next = owner_of[c];
        col_of[r] = c;
        owner_of[c] = r;
        r = next;
    }
    col_of[row] = target;
    owner_of[target] = row;
    true
}

/// Minimum total Euclidean distance bijection. Among optimal bijections the
/// lexicographically smallest `sigma` is returned.
pub fn assign_centroids(samples: &[Vec<f64>], centroids: &[Vec<f64>]) -> Result<Assignment> {
    let n = samples.len();
    if centroids.len() != n {
        return Err(Error::CardinalityMismatch {
            samples: n,
            centroids: centroids.len(),
        });
    }
    if n == 0 {
        return Ok(Assignment {
            sigma: Vec::new(),
            cost: 0.0,
        });
    }
    let cost: Vec<f64> = samples
        .iter()
        .flat_map(|s| centroids.iter().map(move |c| dist(s, c)))
        .collect();
    let (mut col_of, u, v) = hungarian(&cost, n);
    let scale = cost.iter().fold(0.0f64, |m, c| m.max(*c));
    let eps = 1e-9 * (1.0 + scale);
    let tight: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| cost[i * n + j] - u[i] - v[j] <= eps).collect())
        .collect();
    let mut owner_of = vec![0; n];
    for (i, &c) in col_of.iter().enumerate() {
        owner_of[c] = i;
    }
    for i in 0..n {
        for j in 0..col_of[i] {
            if !tight[i][j] || owner_of[j] < i {
                continue;
            }
            let mut o2 = owner_of.clone();
            let mut c2 = col_of.clone();
            if repair(&tight, &mut o2, &mut c2, i, j) {
                owner_of = o2;
                col_of = c2;
                break;
            }
        }
    }
    let total = col_of.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    Ok(Assignment {
        sigma: col_of,
        cost: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(samples: &[Vec<f64>], centroids: &[Vec<f64>]) -> (f64, Vec<usize>) {
        fn perms(n: usize) -> Vec<Vec<usize>> {
            if n == 0 {
                return vec![vec![]];
            }
            let mut out = Vec::new();
            for p in perms(n - 1) {
                for pos in 0..=p.len() {
                    let mut q = p.clone();
                    q.insert(pos, n - 1);
                    out.push(q);
                }
            }
            out
        }
        let mut best = (f64::INFINITY, Vec::new());
        let mut all = perms(samples.len());
        all.sort();
        for p in all {
            let c: f64 = p.iter().enumerate().map(|(i, &j)| dist(&samples[i], &centroids[j])).sum();
            if c < best.0 - 1e-12 {
                best = (c, p);
            }
        }
        best
    }

    #[test]
    fn identical_sets_match_identically() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 3.0]];
        let a = assign_centroids(&pts, &pts).unwrap();
        assert_eq!(a.sigma, vec![0, 1, 2]);
        assert_eq!(a.cost, 0.0);
    }

    #[test]
    fn crossed_pairs_are_uncrossed() {
        let s = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        let c = vec![vec![1.0, 1.0], vec![0.0, 1.0]];
        assert_eq!(assign_centroids(&s, &c).unwrap().sigma, vec![1, 0]);
    }

    #[test]
    fn matches_exhaustive_search() {
        use rand::{Rng, SeedableRng};
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for n in 1..=6 {
            for _ in 0..20 {
                let s: Vec<Vec<f64>> = (0..n).map(|_| vec![r.random(), r.random()]).collect();
                let c: Vec<Vec<f64>> = (0..n).map(|_| vec![r.random(), r.random()]).collect();
                let a = assign_centroids(&s, &c).unwrap();
                let (best, perm) = brute(&s, &c);
                assert!((a.cost - best).abs() < 1e-9);
                assert_eq!(a.sigma, perm);
            }
        }
    }

    #[test]
    fn ties_resolve_lexicographically() {
        // All four points coincide: every bijection is optimal.
        let s = vec![vec![0.0, 0.0]; 4];
        let a = assign_centroids(&s, &s).unwrap();
        assert_eq!(a.sigma, vec![0, 1, 2, 3]);
        // Square: two optimal matchings of equal cost.
        let s = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let c = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(assign_centroids(&s, &c).unwrap().sigma, vec![0, 1]);
    }

    #[test]
    fn cardinality_is_checked() {
        let err = assign_centroids(&[vec![0.0]], &[vec![0.0], vec![1.0]]);
        assert!(matches!(err, Err(Error::CardinalityMismatch { samples: 1, centroids: 2 })));
    }
}
