//! Voronoi, balanced Voronoi and Moran spread indices.
//!
//! Cell estimates use the Horvitz–Thompson reading
//! Ĝ_x(U*) = Σ_{ℓ ∈ S ∩ U*} (x_ℓ/π_ℓ) / X(U), so a cell whose sampled mass
//! matches its population mass contributes nothing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist, sq_dist};
use crate::population::{Population, Sample};

/// Assignment of every population unit to its nearest sampled unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoronoiCells {
    owner: Vec<usize>,
    cells: Vec<(usize, Vec<usize>)>,
}

impl VoronoiCells {
    /// Sampled unit owning each population unit.
    pub fn owner(&self) -> &[usize] {
        &self.owner
    }

    /// `(sampled unit, members)` in ascending sampled-unit order.
    pub fn cells(&self) -> &[(usize, Vec<usize>)] {
        &self.cells
    }

    pub fn cell(&self, sampled: usize) -> Option<&[usize]> {
        self.cells.iter().find(|c| c.0 == sampled).map(|c| c.1.as_slice())
    }
}

/// Nearest sampled unit by Euclidean distance; ties go to the lowest id.
pub fn voronoi_cells(pop: &Population, sample: &Sample) -> Result<VoronoiCells> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    for &s in sample.members() {
        pop.check_unit(s)?;
    }
    let members = sample.members();
    let mut cells: Vec<(usize, Vec<usize>)> = members.iter().map(|&s| (s, Vec::new())).collect();
    let mut owner = Vec::with_capacity(pop.len());
    for u in 0..pop.len() {
        let c = pop.coord(u);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &s) in members.iter().enumerate() {
            let d = sq_dist(c, pop.coord(s));
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        owner.push(members[best]);
        cells[best].1.push(u);
    }
    Ok(VoronoiCells { owner, cells })
}

fn check_column(pop: &Population, x: &[f64]) -> Result<()> {
    if x.len() != pop.len() {
        return Err(Error::DimensionMismatch {
            expected: pop.len(),
            found: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("auxiliary variable must be finite".into()));
    }
    Ok(())
}

/// Per-cell residuals Σ_{S∩cell} x/π − X(cell) for one column.
fn residuals(pop: &Population, sample: &Sample, cells: &VoronoiCells, x: &[f64]) -> Vec<f64> {
    let pi = pop.pi();
    cells
        .cells()
        .iter()
        .map(|(_, members)| {
            let est: f64 = members
                .iter()
                .filter(|&&u| sample.contains(u))
                .map(|&u| x[u] / pi[u])
                .sum();
            let truth: f64 = members.iter().map(|&u| x[u]).sum();
            est - truth
        })
        .collect()
}

/// VI = n Σ_{ℓ∈S} (Ĝ_π(U_ℓ) − G_π(U_ℓ))².
pub fn voronoi_index(pop: &Population, sample: &Sample) -> Result<f64> {
    let cells = voronoi_cells(pop, sample)?;
    let total: f64 = pop.pi().iter().sum();
    let n = sample.len() as f64;
    Ok(n * residuals(pop, sample, &cells, pop.pi())
        .iter()
        .map(|r| (r / total).powi(2))
        .sum::<f64>())
}

/// Weighting matrix for the balanced Voronoi index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum QMatrix {
    Identity,
    /// Q = XᵀX with X = [1, x_1 … x_p]; residuals gain an intercept row.
    Gram,
    /// Row-major p × p positive definite matrix.
    Custom(Vec<f64>),
}

/// Cholesky factor of a row-major SPD matrix.
fn cholesky(a: &[f64], p: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; p * p];
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    for i in 0..p {
        for j in 0..=i {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if !(s > 1e-12 * scale) {
                    return Err(Error::SingularQ);
                }
                l[i * p + i] = s.sqrt();
            } else {
                l[i * p + j] = s / l[j * p + j];
            }
        }
    }
    Ok(l)
}

/// rᵀ Q⁻¹ r = ‖L⁻¹ r‖².
fn quad_form(l: &[f64], p: usize, r: &[f64]) -> f64 {
    let mut y = vec![0.0; p];
    for i in 0..p {
        let mut s = r[i];
        for k in 0..i {
            s -= l[i * p + k] * y[k];
        }
        y[i] = s / l[i * p + i];
    }
    y.iter().map(|v| v * v).sum()
}

/// BI = sqrt((1/n) Σ_{ℓ∈S} rᵀ Q⁻¹ r) with r_x(U_ℓ) = X(U)[Ĝ_x − G_x].
///
/// An empty `xcols` uses x = π.
pub fn balanced_voronoi_index(pop: &Population, sample: &Sample, xcols: &[&[f64]], q: &QMatrix) -> Result<f64> {
    let default = [pop.pi()];
    let cols: &[&[f64]] = if xcols.is_empty() { &default } else { xcols };
    for x in cols {
        check_column(pop, x)?;
    }
    let cells = voronoi_cells(pop, sample)?;
    let ones = vec![1.0; pop.len()];
    let mut columns: Vec<&[f64]> = Vec::new();
    if matches!(q, QMatrix::Gram) {
        columns.push(&ones);
    }
    columns.extend_from_slice(cols);
    let p = columns.len();
    let qm: Vec<f64> = match q {
        QMatrix::Identity => (0..p * p).map(|i| if i % (p + 1) == 0 { 1.0 } else { 0.0 }).collect(),
        QMatrix::Gram => {
            let mut g = vec![0.0; p * p];
            for i in 0..p {
                for j in 0..p {
                    g[i * p + j] = columns[i].iter().zip(columns[j]).map(|(a, b)| a * b).sum();
                }
            }
            g
        }
        QMatrix::Custom(m) => {
            if m.len() != p * p {
                return Err(Error::DimensionMismatch {
                    expected: p * p,
                    found: m.len(),
                });
            }
            for i in 0..p {
                for j in 0..i {
                    if (m[i * p + j] - m[j * p + i]).abs() > 1e-12 * (m[i * p + j].abs() + m[j * p + i].abs() + 1.0) {
                        return Err(Error::SingularQ);
                    }
                }
            }
            m.clone()
        }
    };
    let l = cholesky(&qm, p)?;
    let per_col: Vec<Vec<f64>> = columns.iter().map(|x| residuals(pop, sample, &cells, x)).collect();
    let mut acc = 0.0;
    for c in 0..cells.cells().len() {
        let r: Vec<f64> = per_col.iter().map(|col| col[c]).collect();
        acc += quad_form(&l, p, &r);
    }
    Ok((acc / sample.len() as f64).sqrt())
}

/// Sparse symmetric inverse-distance weights on a k-nearest-neighbour graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialWeights {
    k: usize,
    neighbours: Vec<Vec<(usize, f64)>>,
}

impl SpatialWeights {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.neighbours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbours.is_empty()
    }

    /// `(neighbour, weight)` pairs of a unit in ascending neighbour order.
    pub fn neighbours(&self, unit: usize) -> &[(usize, f64)] {
        &self.neighbours[unit]
    }

    pub fn weight(&self, a: usize, b: usize) -> f64 {
        self.neighbours[a]
            .binary_search_by(|e| e.0.cmp(&b))
            .map_or(0.0, |i| self.neighbours[a][i].1)
    }

    /// Row sums of W.
    pub fn degrees(&self) -> Vec<f64> {
        self.neighbours.iter().map(|r| r.iter().map(|e| e.1).sum()).collect()
    }

    /// Multiplies every weight by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        SpatialWeights {
            k: self.k,
            neighbours: self
                .neighbours
                .iter()
                .map(|r| r.iter().map(|&(j, w)| (j, w * factor)).collect())
                .collect(),
        }
    }
}

/// max(1, round(N/n) − 1): roughly the expected Voronoi cell size.
pub fn default_neighbours(population: usize, n: usize) -> usize {
    let ratio = (population as f64 / n.max(1) as f64).round() as usize;
    ratio.saturating_sub(1).max(1)
}

/// Union of directed k-NN links (ties by lower id), weighted 1/e.
pub fn build_weights(pop: &Population, k: usize) -> Result<SpatialWeights> {
    if k == 0 {
        return Err(Error::InvalidArgument("neighbour count k must be at least 1".into()));
    }
    let n = pop.len();
    let mut links: Vec<Vec<usize>> = vec![Vec::new(); n];
    for u in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&v| v != u)
            .map(|v| (sq_dist(pop.coord(u), pop.coord(v)), v))
            .collect();
        let take = k.min(others.len());
        if take < others.len() {
            others.select_nth_unstable_by(take, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        }
        for &(_, v) in &others[..take] {
            links[u].push(v);
            links[v].push(u);
        }
    }
    let mut neighbours = Vec::with_capacity(n);
    for (u, mut l) in links.into_iter().enumerate() {
        l.sort_unstable();
        l.dedup();
        let mut row = Vec::with_capacity(l.len());
        for v in l {
            let e = dist(pop.coord(u), pop.coord(v));
            if e < 1e-12 {
                return Err(Error::CoincidentNeighbors {
                    a: u.min(v),
                    b: u.max(v),
                });
            }
            row.push((v, 1.0 / e));
        }
        neighbours.push(row);
    }
    Ok(SpatialWeights { k, neighbours })
}

/// Normalized Moran index zᵀWz / zᵀDz with z = a(S) − ā(S) and D the
/// diagonal of row sums of W. The ratio is a Rayleigh quotient of the pencil
/// (W, D), so it lies in [−1, 1].
pub fn moran_index(pop: &Population, sample: &Sample, weights: &SpatialWeights) -> Result<f64> {
    let n = pop.len();
    if weights.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: weights.len(),
        });
    }
    if sample.is_empty() || sample.len() >= n {
        return Err(Error::DegenerateSample);
    }
    for &s in sample.members() {
        pop.check_unit(s)?;
    }
    let abar = sample.len() as f64 / n as f64;
    let z: Vec<f64> = sample
        .indicator(n)
        .into_iter()
        .map(|a| if a { 1.0 - abar } else { -abar })
        .collect();
    let mut num = 0.0;
    let mut den = 0.0;
    for (u, row) in weights.neighbours.iter().enumerate() {
        let mut deg = 0.0;
        for &(v, w) in row {
            num += z[u] * w * z[v];
            deg += w;
        }
        den += deg * z[u] * z[u];
    }
    if !(den > 0.0) {
        return Err(Error::DegenerateSample);
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corners() -> Population {
        Population::from_points(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], vec![0.5; 4]).unwrap()
    }

    #[test]
    fn cells_and_ties() {
        let pop = Population::from_points(&[[0.0, 0.0], [1.0, 0.0]], vec![0.5, 0.5]).unwrap();
        let c = voronoi_cells(&pop, &Sample::new(vec![0])).unwrap();
        assert_eq!(c.cell(0).unwrap(), &[0, 1]);

        let c = voronoi_cells(&corners(), &Sample::new(vec![0, 3])).unwrap();
        assert_eq!(c.cell(0).unwrap(), &[0, 1, 2]);
        assert_eq!(c.cell(3).unwrap(), &[3]);

        let all = Sample::new(vec![0, 1, 2, 3]);
        let c = voronoi_cells(&corners(), &all).unwrap();
        assert!(c.cells().iter().all(|(s, m)| m == &vec![*s]));
        assert!(matches!(voronoi_cells(&corners(), &Sample::new(vec![])), Err(Error::EmptySample)));
    }

    #[test]
    fn voronoi_index_of_two_unit_population() {
        // Cell {1,2}: HT mass 0.5/0.5 = 1 equals its population mass 1.
        let pop = Population::from_points(&[[0.0, 0.0], [1.0, 0.0]], vec![0.5, 0.5]).unwrap();
        let s = Sample::new(vec![0]);
        assert_eq!(voronoi_index(&pop, &s).unwrap(), 0.0);
        assert_eq!(balanced_voronoi_index(&pop, &s, &[], &QMatrix::Identity).unwrap(), 0.0);
    }

    #[test]
    fn unbalanced_cells_are_penalized() {
        let pop = Population::from_points(
            &[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]],
            vec![0.5; 4],
        )
        .unwrap();
        // Sample {1,2}: cells {1} and {2,3,4}, masses 0.5 and 1.5.
        let s = Sample::new(vec![0, 1]);
        let vi = voronoi_index(&pop, &s).unwrap();
        let oracle = 2.0 * ((1.0 - 0.5) / 2.0f64).powi(2) * 2.0;
        assert!((vi - oracle).abs() < 1e-12);
        let bi = balanced_voronoi_index(&pop, &s, &[], &QMatrix::Identity).unwrap();
        assert!((bi * bi - vi).abs() < 1e-12);
    }

    #[test]
    fn gram_matrix_requires_full_rank() {
        let pop = corners();
        let s = Sample::new(vec![0, 3]);
        let ones = vec![1.0; 4];
        let err = balanced_voronoi_index(&pop, &s, &[&ones], &QMatrix::Gram);
        assert!(matches!(err, Err(Error::SingularQ)));
        let x = vec![1.0, 2.0, 3.0, 5.0];
        assert!(balanced_voronoi_index(&pop, &s, &[&x], &QMatrix::Gram).unwrap() >= 0.0);
    }

    #[test]
    fn weights_examples() {
        let pop = Population::from_points(&[[0.0, 0.0], [2.0, 0.0]], vec![0.5, 0.5]).unwrap();
        let w = build_weights(&pop, 1).unwrap();
        assert_eq!(w.weight(0, 1), 0.5);
        assert_eq!(w.weight(1, 0), 0.5);

        let w = build_weights(&corners(), 1).unwrap();
        for u in 0..4 {
            assert!(w.neighbours(u).iter().all(|&(_, x)| x == 1.0));
        }
        let w = build_weights(&corners(), 3).unwrap();
        assert!((0..4).all(|u| w.neighbours(u).len() == 3));
    }

    #[test]
    fn coincident_neighbours_are_rejected() {
        let pop = Population::from_points(&[[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]], vec![0.5, 0.5, 1.0]).unwrap();
        assert!(matches!(build_weights(&pop, 1), Err(Error::CoincidentNeighbors { a: 0, b: 1 })));
    }

    #[test]
    fn moran_on_a_line() {
        let pts: Vec<[f64; 2]> = (0..9).map(|i| [i as f64, 0.0]).collect();
        let pop = Population::equal_probability(&pts, 4).unwrap();
        let w = build_weights(&pop, 1).unwrap();
        let alternating = Sample::new(vec![1, 3, 5, 7]);
        assert!(moran_index(&pop, &alternating, &w).unwrap() < 0.0);
        let clumped = Sample::new(vec![0, 1, 2, 3]);
        assert!(moran_index(&pop, &clumped, &w).unwrap() > 0.0);
        let full = Sample::new((0..9).collect());
        assert!(matches!(moran_index(&pop, &full, &w), Err(Error::DegenerateSample)));
    }

    #[test]
    fn moran_is_scale_free_in_w() {
        let pts: Vec<[f64; 2]> = (0..12).map(|i| [(i % 4) as f64, (i / 4) as f64 * 1.3]).collect();
        let pop = Population::equal_probability(&pts, 3).unwrap();
        let w = build_weights(&pop, 2).unwrap();
        let s = Sample::new(vec![0, 5, 11]);
        let a = moran_index(&pop, &s, &w).unwrap();
        let b = moran_index(&pop, &s, &w.scaled(7.5)).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn default_k_rule() {
        assert_eq!(default_neighbours(100, 16), 5);
        assert_eq!(default_neighbours(10, 8), 1);
    }
}
