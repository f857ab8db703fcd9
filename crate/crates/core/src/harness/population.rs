//! Synthetic and file-backed study populations on the unit square.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::Population;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Layout {
    Gridded,
    Random,
    /// Gaussian blobs around uniformly placed centres.
    Clustered { clusters: usize, spread: f64 },
    /// Neyman–Scott process thinned or topped up to exactly N points.
    NeymanScott { kappa: f64, mu: f64, sigma: f64 },
    /// Halton points in bases 2 and 3.
    Halton,
    /// Any CSV with named coordinate columns; N is taken from the file.
    Csv { path: PathBuf, x: String, y: String },
}

impl Layout {
    pub fn clustered() -> Self {
        Layout::Clustered {
            clusters: 5,
            spread: 0.05,
        }
    }

    pub fn neyman_scott() -> Self {
        Layout::NeymanScott {
            kappa: 25.0,
            mu: 41.0,
            sigma: 0.03,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layout::Gridded => "gridded",
            Layout::Random => "random",
            Layout::Clustered { .. } => "clustered",
            Layout::NeymanScott { .. } => "neyman-scott",
            Layout::Halton => "halton",
            Layout::Csv { .. } => "csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProbabilityMode {
    Ep { n: usize },
    /// π rank-linear in x: rank(x) + N/2, scaled to n and clipped.
    UpGradient { n: usize },
    /// π proportional to a CSV column, scaled to n and clipped.
    UpColumn { column: String, n: usize },
}

impl ProbabilityMode {
    pub fn n(&self) -> usize {
        match self {
            ProbabilityMode::Ep { n } | ProbabilityMode::UpGradient { n } | ProbabilityMode::UpColumn { n, .. } => *n,
        }
    }

    /// Same mode with a different sample size.
    pub fn with_n(&self, n: usize) -> Self {
        match self {
            ProbabilityMode::Ep { .. } => ProbabilityMode::Ep { n },
            ProbabilityMode::UpGradient { .. } => ProbabilityMode::UpGradient { n },
            ProbabilityMode::UpColumn { column, .. } => ProbabilityMode::UpColumn { column: column.clone(), n },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub layout: Layout,
    pub size: usize,
    pub probability: ProbabilityMode,
    #[serde(default)]
    pub seed: u64,
}

/// Scales positive sizes to total n, fixing units at 1 until none exceed it.
pub fn inclusion_probabilities(sizes: &[f64], n: usize) -> Result<Vec<f64>> {
    if n > sizes.len() {
        return Err(Error::InfeasibleProbabilities {
            n,
            population: sizes.len(),
        });
    }
    if let Some(u) = sizes.iter().position(|a| !(a.is_finite() && *a > 0.0)) {
        return Err(Error::OutOfRangeProbability {
            unit: u,
            value: sizes[u],
        });
    }
    let mut pi = vec![0.0; sizes.len()];
    let mut fixed = vec![false; sizes.len()];
    loop {
        let left = n as f64 - fixed.iter().filter(|f| **f).count() as f64;
        let mass: f64 = sizes.iter().zip(&fixed).filter(|(_, f)| !**f).map(|(a, _)| a).sum();
        let mut changed = false;
        for (u, a) in sizes.iter().enumerate() {
            if fixed[u] {
                pi[u] = 1.0;
                continue;
            }
            pi[u] = left * a / mass;
            if pi[u] >= 1.0 {
                fixed[u] = true;
                changed = true;
            }
        }
        if !changed {
            return Ok(pi);
        }
    }
}

fn grid_points(size: usize) -> Vec<[f64; 2]> {
    let cols = (size as f64).sqrt().ceil() as usize;
    let rows = size.div_ceil(cols.max(1));
    (0..size)
        .map(|i| {
            [
                ((i % cols) as f64 + 0.5) / cols as f64,
                ((i / cols) as f64 + 0.5) / rows as f64,
            ]
        })
        .collect()
}

fn halton(mut i: usize, base: usize) -> f64 {
    let (mut f, mut r) = (1.0, 0.0);
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Gaussian offset around `c`, redrawn until inside the unit square.
fn offspring<R: Rng>(c: [f64; 2], sd: f64, rng: &mut R) -> [f64; 2] {
    let normal = Normal::new(0.0, sd).expect("positive spread");
    loop {
        let p = [c[0] + normal.sample(rng), c[1] + normal.sample(rng)];
        if (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1]) {
            return p;
        }
    }
}

fn neyman_scott<R: Rng>(size: usize, kappa: f64, mu: f64, sigma: f64, rng: &mut R) -> Result<Vec<[f64; 2]>> {
    if !(kappa > 0.0 && mu > 0.0 && sigma > 0.0) {
        return Err(Error::InvalidArgument("Neyman–Scott parameters must be positive".into()));
    }
    let parents_dist = Poisson::new(kappa).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let kids_dist = Poisson::new(mu).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let parent_count = loop {
        let k = parents_dist.sample(rng) as usize;
        if k >= 1 {
            break k;
        }
    };
    let parents: Vec<[f64; 2]> = (0..parent_count).map(|_| [rng.random(), rng.random()]).collect();
    let mut pts = Vec::new();
    for &p in &parents {
        let kids = kids_dist.sample(rng) as usize;
        pts.extend((0..kids).map(|_| offspring(p, sigma, rng)));
    }
    if pts.len() > size {
        pts.shuffle(rng);
        pts.truncate(size);
    }
    while pts.len() < size {
        let p = parents[rng.random_range(0..parents.len())];
        pts.push(offspring(p, sigma, rng));
    }
    Ok(pts)
}

/// Reads named numeric columns from a headed CSV.
pub fn read_columns(path: &std::path::Path, names: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let idx: Vec<usize> = names
        .iter()
        .map(|n| {
            headers.iter().position(|h| h.trim() == *n).ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("missing column `{n}`"),
            })
        })
        .collect::<Result<_>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (c, &i) in idx.iter().enumerate() {
            let v: f64 = rec[i].trim().parse().map_err(|e| Error::Parse {
                line: row + 2,
                message: format!("column `{}`: {e}", names[c]),
            })?;
            cols[c].push(v);
        }
    }
    Ok(cols)
}

pub fn gen_population(spec: &PopulationSpec) -> Result<Population> {
    let mut rng = rng::stream(spec.seed, rng::tag::POPULATION);
    let size = spec.size;
    let mut column: Option<Vec<f64>> = None;
    let points: Vec<[f64; 2]> = match &spec.layout {
        Layout::Gridded => grid_points(size),
        Layout::Random => (0..size).map(|_| [rng.random(), rng.random()]).collect(),
        Layout::Clustered { clusters, spread } => {
            if *clusters == 0 || !(*spread > 0.0) {
                return Err(Error::InvalidArgument("clustered layout needs clusters ≥ 1 and spread > 0".into()));
            }
            let centres: Vec<[f64; 2]> = (0..*clusters)
                .map(|_| [0.15 + 0.7 * rng.random::<f64>(), 0.15 + 0.7 * rng.random::<f64>()])
                .collect();
            (0..size)
                .map(|i| offspring(centres[i % clusters], *spread, &mut rng))
                .collect()
        }
        Layout::NeymanScott { kappa, mu, sigma } => neyman_scott(size, *kappa, *mu, *sigma, &mut rng)?,
        Layout::Halton => (1..=size).map(|i| [halton(i, 2), halton(i, 3)]).collect(),
        Layout::Csv { path, x, y } => {
            let mut names = vec![x.as_str(), y.as_str()];
            if let ProbabilityMode::UpColumn { column, .. } = &spec.probability {
                names.push(column.as_str());
            }
            let mut cols = read_columns(path, &names)?;
            if cols.len() == 3 {
                column = cols.pop();
            }
            cols[0].iter().zip(&cols[1]).map(|(&a, &b)| [a, b]).collect()
        }
    };
    if points.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let n = spec.probability.n();
    if n == 0 {
        return Err(Error::InvalidArgument("sample size n must be at least 1".into()));
    }
    let pi = match &spec.probability {
        ProbabilityMode::Ep { .. } => {
            if n > points.len() {
                return Err(Error::InfeasibleProbabilities {
                    n,
                    population: points.len(),
                });
            }
            vec![n as f64 / points.len() as f64; points.len()]
        }
        ProbabilityMode::UpGradient { .. } => {
            let mut by_x: Vec<usize> = (0..points.len()).collect();
            by_x.sort_by(|&a, &b| points[a][0].total_cmp(&points[b][0]).then(a.cmp(&b)));
            let mut sizes = vec![0.0; points.len()];
            let offset = points.len() as f64 / 2.0;
            for (rank, &u) in by_x.iter().enumerate() {
                sizes[u] = (rank + 1) as f64 + offset;
            }
            inclusion_probabilities(&sizes, n)?
        }
        ProbabilityMode::UpColumn { column: name, .. } => {
            let values = column.ok_or_else(|| {
                Error::InvalidArgument(format!("column `{name}` needs a csv layout"))
            })?;
            inclusion_probabilities(&values, n)?
        }
    };
    Population::from_points(&points, pi)
}
