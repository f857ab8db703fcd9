//! Seeded Monte Carlo comparison of designs on spread indices.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gfs::{build_bars, random_order};
use crate::gms::{greedy_search, GuidingIndex, SearchConfig};
use crate::indices::{balanced_voronoi_index, build_weights, default_neighbours, moran_index, voronoi_index, QMatrix};
use crate::disparity::density_disparity_index;
use crate::nms::{nms_design, NmsConfig, NmsDesign};
use crate::population::{fmt_f64, Population, Sample};
use crate::rng;

use super::designs::{lpm1_sample, srs_sample, DesignKind};
use super::population::{gen_population, PopulationSpec};

/// Upper clip applied to BI in summaries only.
pub const BI_SUMMARY_CLIP: f64 = 1.22;

fn default_indices() -> Vec<GuidingIndex> {
    vec![GuidingIndex::Moran]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub population: PopulationSpec,
    pub designs: Vec<DesignKind>,
    pub sample_sizes: Vec<usize>,
    pub replicates: usize,
    #[serde(default = "default_indices")]
    pub indices: Vec<GuidingIndex>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub nms: NmsConfig,
    #[serde(default)]
    pub search: SearchConfig,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be at least 1".into()));
        }
        if self.designs.is_empty() || self.sample_sizes.is_empty() || self.indices.is_empty() {
            return Err(Error::InvalidArgument("designs, sample sizes and indices must be nonempty".into()));
        }
        if self.sample_sizes.contains(&0) {
            return Err(Error::InvalidArgument("sample sizes must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexRow {
    pub replicate: usize,
    pub design: DesignKind,
    pub index: GuidingIndex,
    /// NaN when the draw or the index failed.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub failures: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64], clip: Option<f64>) -> Summary {
    let mut v: Vec<f64> = values
        .iter()
        .copied()
        .filter(|x| x.is_finite())
        .map(|x| clip.map_or(x, |c| x.min(c)))
        .collect();
    v.sort_by(f64::total_cmp);
    let mean = if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    Summary {
        count: v.len(),
        failures: values.len() - v.len(),
        mean,
        min: v.first().copied().unwrap_or(f64::NAN),
        q1: quantile(&v, 0.25),
        median: quantile(&v, 0.5),
        q3: quantile(&v, 0.75),
        max: v.last().copied().unwrap_or(f64::NAN),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub n: usize,
    pub csv: PathBuf,
    pub rows: Vec<IndexRow>,
    /// design → index → summary.
    pub summary: BTreeMap<String, BTreeMap<String, Summary>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub sizes: Vec<SizeReport>,
    pub summary_path: PathBuf,
    pub failures: usize,
}

/// Fixed per-size designs that are built once and sampled per replicate.
struct Prepared {
    nms: Option<NmsDesign>,
    gms: Option<NmsDesign>,
}

fn design_salt(d: DesignKind) -> u64 {
    d as u64 + 1
}

fn draw(pop: &Population, n: usize, design: DesignKind, prepared: &Prepared, seed: u64) -> Result<Sample> {
    let mut r = rng::stream(seed, rng::tag::DESIGN_DRAW);
    use rand::Rng;
    match design {
        DesignKind::Srs => srs_sample(pop, n, &mut r),
        DesignKind::Lpm1 => Ok(lpm1_sample(pop, &mut r)),
        DesignKind::GfsRandom => Ok(build_bars(pop, &random_order(pop.len(), seed))?.draw(&mut r)),
        DesignKind::Nms => Ok(prepared.nms.as_ref().expect("prepared").sample(r.random())),
        DesignKind::Gms => Ok(prepared.gms.as_ref().expect("prepared").sample(r.random())),
    }
}

fn write_rows(path: &Path, rows: &[IndexRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["replicate", "design", "index", "value"])?;
    for r in rows {
        w.write_record([
            r.replicate.to_string(),
            r.design.name().to_string(),
            r.index.name().to_string(),
            fmt_f64(r.value),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every (n, design, replicate) cell, writing `indices_n{n}.csv` and
/// `summary.json` into the output directory.
pub fn run_monte_carlo(config: &SimulationConfig) -> Result<RunReport> {
    config.validate()?;
    std::fs::create_dir_all(&config.output_dir)?;
    let mut sizes = Vec::new();
    let mut failures = 0usize;
    for &n in &config.sample_sizes {
        let spec = PopulationSpec {
            probability: config.population.probability.with_n(n),
            ..config.population.clone()
        };
        let pop = gen_population(&spec)?;
        let size_seed = rng::derive(config.seed, n as u64);
        let prepared = Prepared {
            nms: if config.designs.contains(&DesignKind::Nms) {
                Some(nms_design(&pop, config.nms.clone(), size_seed)?)
            } else {
                None
            },
            gms: if config.designs.contains(&DesignKind::Gms) {
                let search = SearchConfig {
                    seed: size_seed,
                    nms: config.nms.clone(),
                    ..config.search.clone()
                };
                Some(greedy_search(&pop, &search)?.best.design)
            } else {
                None
            },
        };
        let weights = if config.indices.contains(&GuidingIndex::Moran) {
            Some(build_weights(&pop, default_neighbours(pop.len(), n))?)
        } else {
            None
        };
        let base = rng::derive(size_seed, rng::tag::REPLICATE);
        let mut rows: Vec<IndexRow> = (0..config.replicates)
            .into_par_iter()
            .flat_map_iter(|rep| {
                let rep_seed = rng::derive(base, rep as u64);
                let mut out = Vec::new();
                for &design in &config.designs {
                    let seed = rng::derive(rep_seed, design_salt(design));
                    let sample = draw(&pop, n, design, &prepared, seed);
                    for &index in &config.indices {
                        let value = sample
                            .as_ref()
                            .ok()
                            .and_then(|s| {
                                match index {
                                    GuidingIndex::Moran => moran_index(&pop, s, weights.as_ref().expect("built")),
                                    GuidingIndex::Voronoi => voronoi_index(&pop, s),
                                    GuidingIndex::BalancedVoronoi => {
                                        balanced_voronoi_index(&pop, s, &[], &QMatrix::Identity)
                                    }
                                    GuidingIndex::Disparity => density_disparity_index(&pop, s, None, seed).map(|r| r.di),
                                }
                                .ok()
                            })
                            .unwrap_or(f64::NAN);
                        out.push(IndexRow {
                            replicate: rep,
                            design,
                            index,
                            value,
                        });
                    }
                }
                out
            })
            .collect();
        rows.sort_by_key(|r| {
            (
                r.replicate,
                config.designs.iter().position(|d| *d == r.design),
                config.indices.iter().position(|i| *i == r.index),
            )
        });
        let mut summary: BTreeMap<String, BTreeMap<String, Summary>> = BTreeMap::new();
        for &design in &config.designs {
            for &index in &config.indices {
                let values: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.design == design && r.index == index)
                    .map(|r| r.value)
                    .collect();
                let clip = (index == GuidingIndex::BalancedVoronoi).then_some(BI_SUMMARY_CLIP);
                let s = summarize(&values, clip);
                failures += s.failures;
                summary
                    .entry(design.name().to_string())
                    .or_default()
                    .insert(index.name().to_string(), s);
            }
        }
        let csv = config.output_dir.join(format!("indices_n{n}.csv"));
        write_rows(&csv, &rows)?;
        sizes.push(SizeReport { n, csv, rows, summary });
    }
    let summary_path = config.output_dir.join("summary.json");
    let json: BTreeMap<String, &BTreeMap<String, BTreeMap<String, Summary>>> =
        sizes.iter().map(|s| (format!("n{}", s.n), &s.summary)).collect();
    std::fs::write(&summary_path, serde_json::to_string_pretty(&json)?)?;
    Ok(RunReport {
        sizes,
        summary_path,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::population::{Layout, ProbabilityMode};

    fn config(dir: &Path, designs: Vec<DesignKind>, replicates: usize) -> SimulationConfig {
        SimulationConfig {
            population: PopulationSpec {
                layout: Layout::Gridded,
                size: 64,
                probability: ProbabilityMode::Ep { n: 4 },
                seed: 1,
            },
            designs,
            sample_sizes: vec![4],
            replicates,
            indices: vec![GuidingIndex::Moran],
            output_dir: dir.to_path_buf(),
            seed: 9,
            nms: NmsConfig::default(),
            search: SearchConfig {
                iterations: 5,
                ..SearchConfig::default()
            },
        }
    }

    #[test]
    fn quartiles_and_clip() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0, 5.0, f64::NAN], None);
        assert_eq!((s.count, s.failures), (5, 1));
        assert_eq!((s.q1, s.median, s.q3, s.mean), (2.0, 3.0, 4.0, 3.0));
        assert_eq!(summarize(&[0.5, 2.0], Some(BI_SUMMARY_CLIP)).max, BI_SUMMARY_CLIP);
    }

    #[test]
    fn single_replicate_writes_one_row() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_monte_carlo(&config(dir.path(), vec![DesignKind::Srs], 1)).unwrap();
        let text = std::fs::read_to_string(&report.sizes[0].csv).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("replicate,design,index,value\n0,srs,MI,"));
        assert!(report.summary_path.exists());
    }

    #[test]
    fn runs_are_reproducible() {
        let designs = vec![DesignKind::Srs, DesignKind::Lpm1, DesignKind::GfsRandom, DesignKind::Nms, DesignKind::Gms];
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ra = run_monte_carlo(&config(a.path(), designs.clone(), 6)).unwrap();
        let rb = run_monte_carlo(&config(b.path(), designs, 6)).unwrap();
        assert_eq!(
            std::fs::read_to_string(&ra.sizes[0].csv).unwrap(),
            std::fs::read_to_string(&rb.sizes[0].csv).unwrap()
        );
        assert_eq!(ra.failures, 0);
    }
}
