//! Greedy best-first search over NMS orderings.
//!
//! Seed designs are scored with an expected spread index and kept in a
//! max-priority queue. Each iteration pops the best unexpanded design,
//! derives children by editing zone and unit orderings, scores them and
//! enqueues them. Edits never touch the partition, so every candidate keeps
//! the population's inclusion probabilities.

use std::cmp::Reverse;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::sync::Mutex;

use ordered_float::OrderedFloat;
use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::up_balanced_clustering_with;
use crate::disparity::density_disparity_index;
use crate::error::{Error, Result};
use crate::indices::{balanced_voronoi_index, build_weights, default_neighbours, moran_index, voronoi_index, QMatrix, SpatialWeights};
use crate::nms::{order_zone_units, order_zones, NmsConfig, NmsDesign, RankingRule};
use crate::population::{fmt_f64, Population, Sample};
use crate::rng;

pub const DEFAULT_QUEUE_CAP: usize = 10_000;
const EDIT_RETRIES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GuidingIndex {
    #[serde(rename = "MI", alias = "moran")]
    Moran,
    #[serde(rename = "VI", alias = "voronoi")]
    Voronoi,
    #[serde(rename = "BI", alias = "balanced-voronoi")]
    BalancedVoronoi,
    #[serde(rename = "DI", alias = "disparity")]
    Disparity,
}

impl GuidingIndex {
    pub fn name(self) -> &'static str {
        match self {
            GuidingIndex::Moran => "MI",
            GuidingIndex::Voronoi => "VI",
            GuidingIndex::BalancedVoronoi => "BI",
            GuidingIndex::Disparity => "DI",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_uppercase().as_str() {
            "MI" => Some(GuidingIndex::Moran),
            "VI" => Some(GuidingIndex::Voronoi),
            "BI" => Some(GuidingIndex::BalancedVoronoi),
            "DI" => Some(GuidingIndex::Disparity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScoreMode {
    /// Expectation over the exact GFS support.
    Exact,
    /// Mean over this many uniform draws.
    MonteCarlo(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub seeds: Vec<RankingRule>,
    pub iterations: usize,
    pub target: Option<f64>,
    pub children: usize,
    pub edits: usize,
    pub index: GuidingIndex,
    pub mode: ScoreMode,
    pub seed: u64,
    pub queue_cap: usize,
    pub nms: NmsConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            seeds: vec![
                RankingRule::CentroidalPolar,
                RankingRule::HorizontalLex,
                RankingRule::HilbertCurve,
                RankingRule::Random,
            ],
            iterations: 200,
            target: None,
            children: 8,
            edits: 2,
            index: GuidingIndex::Moran,
            mode: ScoreMode::Exact,
            seed: 0,
            queue_cap: DEFAULT_QUEUE_CAP,
            nms: NmsConfig::default(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.children == 0 || self.edits == 0 || self.queue_cap == 0 {
            return Err(Error::InvalidArgument(
                "iterations, children, edits and queue cap must be at least 1".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("at least one seed rule is required".into()));
        }
        if self.mode == ScoreMode::MonteCarlo(0) {
            return Err(Error::InvalidArgument("Monte Carlo scoring needs K ≥ 1".into()));
        }
        Ok(())
    }
}

/// One ordering edit. Positions refer to ranks inside a cluster's plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Edit {
    SwapZoneRanks { cluster: usize, a: usize, b: usize },
    RerankZones { cluster: usize, rule: RankingRule, seed: u64 },
    SwapUnits { cluster: usize, zone: usize, a: usize, b: usize },
    RerankUnits { cluster: usize, zone: usize, rule: RankingRule, seed: u64 },
}

/// Applies an edit to the plans only; call `rebuild` afterwards.
pub fn apply_edit(pop: &Population, design: &mut NmsDesign, edit: Edit) -> Result<()> {
    let bad = || Error::InvalidArgument(format!("edit {edit:?} does not fit the design"));
    match edit {
        Edit::SwapZoneRanks { cluster, a, b } => {
            let zones = &mut design.plans.get_mut(cluster).ok_or_else(bad)?.zones;
            if a >= zones.len() || b >= zones.len() {
                return Err(bad());
            }
            zones.swap(a, b);
        }
        Edit::RerankZones { cluster, rule, seed } => {
            let plan = design.plans.get_mut(cluster).ok_or_else(bad)?;
            plan.zones = order_zones(std::mem::take(&mut plan.zones), rule, seed);
        }
        Edit::SwapUnits { cluster, zone, a, b } => {
            let units = &mut design
                .plans
                .get_mut(cluster)
                .and_then(|p| p.zones.get_mut(zone))
                .ok_or_else(bad)?
                .units;
            if a >= units.len() || b >= units.len() {
                return Err(bad());
            }
            units.swap(a, b);
        }
        Edit::RerankUnits { cluster, zone, rule, seed } => {
            let z = design
                .plans
                .get_mut(cluster)
                .and_then(|p| p.zones.get_mut(zone))
                .ok_or_else(bad)?;
            z.units = order_zone_units(pop, &z.units, rule, seed);
        }
    }
    Ok(())
}

fn draw_edit<R: Rng + ?Sized>(design: &NmsDesign, rng: &mut R) -> Option<Edit> {
    let clusters = design.plans.len();
    for _ in 0..EDIT_RETRIES {
        let cluster = rng.random_range(0..clusters);
        let plan = &design.plans[cluster];
        let kind = rng.random_range(0..4);
        let zones = plan.zones.len();
        let edit = match kind {
            0 if zones >= 2 => {
                let a = rng.random_range(0..zones);
                let b = (a + rng.random_range(1..zones)) % zones;
                Edit::SwapZoneRanks { cluster, a, b }
            }
            1 if zones >= 2 => Edit::RerankZones {
                cluster,
                rule: *RankingRule::ALL.choose(rng).expect("nonempty"),
                seed: rng.random(),
            },
            2 | 3 => {
                let open: Vec<usize> = (0..zones).filter(|&z| plan.zones[z].units.len() >= 2).collect();
                let Some(&zone) = open.choose(rng) else { continue };
                let k = plan.zones[zone].units.len();
                if kind == 2 {
                    let a = rng.random_range(0..k);
                    let b = (a + rng.random_range(1..k)) % k;
                    Edit::SwapUnits { cluster, zone, a, b }
                } else {
                    Edit::RerankUnits {
                        cluster,
                        zone,
                        rule: *RankingRule::ALL.choose(rng).expect("nonempty"),
                        seed: rng.random(),
                    }
                }
            }
            _ => continue,
        };
        return Some(edit);
    }
    None
}

/// Evaluates oriented sample indices with a per-sample cache.
pub struct Scorer<'a> {
    pop: &'a Population,
    index: GuidingIndex,
    mode: ScoreMode,
    seed: u64,
    weights: Option<SpatialWeights>,
    cache: Mutex<HashMap<Vec<usize>, Option<f64>>>,
}

/// Design score with the support mass lost to degenerate samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub score: f64,
    pub excluded_mass: f64,
}

impl<'a> Scorer<'a> {
    pub fn new(pop: &'a Population, index: GuidingIndex, mode: ScoreMode, seed: u64) -> Result<Self> {
        let weights = match index {
            GuidingIndex::Moran => Some(build_weights(pop, default_neighbours(pop.len(), pop.sample_size()))?),
            _ => None,
        };
        Ok(Scorer {
            pop,
            index,
            mode,
            seed,
            weights,
            cache: Mutex::new(HashMap::new()),
        })
    }

    /// Index of one sample, oriented so that larger is better.
    pub fn oriented(&self, sample: &Sample) -> Result<f64> {
        let pop = self.pop;
        Ok(match self.index {
            GuidingIndex::Moran => -moran_index(pop, sample, self.weights.as_ref().expect("built for MI"))?,
            GuidingIndex::Voronoi => -voronoi_index(pop, sample)?,
            GuidingIndex::BalancedVoronoi => -balanced_voronoi_index(pop, sample, &[], &QMatrix::Identity)?,
            GuidingIndex::Disparity => -density_disparity_index(pop, sample, None, self.seed)?.di.abs(),
        })
    }

    fn cached(&self, sample: &Sample) -> Option<f64> {
        if let Some(v) = self.cache.lock().expect("cache").get(sample.members()) {
            return *v;
        }
        let v = self.oriented(sample).ok().filter(|v| v.is_finite());
        self.cache.lock().expect("cache").insert(sample.members().to_vec(), v);
        v
    }

    pub fn score(&self, design: &NmsDesign) -> Result<ScoreReport> {
        let (mut sum, mut mass, mut excluded) = (0.0, 0.0, 0.0);
        match self.mode {
            ScoreMode::Exact => {
                for iv in design.layout().enumerate_support() {
                    let p = iv.probability();
                    match self.cached(&iv.sample) {
                        Some(v) => {
                            sum += p * v;
                            mass += p;
                        }
                        None => excluded += p,
                    }
                }
            }
            ScoreMode::MonteCarlo(k) => {
                let mut r = rng::stream(rng::derive(self.seed, order_hash(design.total_order())), rng::tag::SEARCH);
                for _ in 0..k {
                    match self.cached(&design.layout().draw(&mut r)) {
                        Some(v) => {
                            sum += v;
                            mass += 1.0;
                        }
                        None => excluded += 1.0,
                    }
                }
                excluded /= k as f64;
                mass /= k as f64;
                sum /= k as f64;
            }
        }
        if !(mass > 0.0) {
            return Err(Error::DegenerateSample);
        }
        Ok(ScoreReport {
            score: sum / mass,
            excluded_mass: excluded,
        })
    }
}

/// Expected oriented index of a design.
pub fn spread_score(pop: &Population, design: &NmsDesign, index: GuidingIndex, mode: ScoreMode, seed: u64) -> Result<f64> {
    Ok(Scorer::new(pop, index, mode, seed)?.score(design)?.score)
}

fn order_hash(order: &[usize]) -> u64 {
    order.iter().fold(0x243F_6A88_85A3_08D3, |h, &u| rng::mix(h ^ u as u64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: u64,
    pub design: NmsDesign,
    pub score: f64,
    /// Index into the seed rules of the design this one descends from.
    pub origin: usize,
    pub provenance: Vec<Edit>,
}

/// Max-priority queue on score; equal scores pop in insertion order. When
/// over capacity the lowest entry is evicted.
#[derive(Debug, Default)]
pub struct CandidateQueue<T> {
    entries: BTreeMap<(OrderedFloat<f64>, Reverse<u64>), T>,
    cap: usize,
    next: u64,
}

impl<T> CandidateQueue<T> {
    pub fn new(cap: usize) -> Self {
        CandidateQueue {
            entries: BTreeMap::new(),
            cap,
            next: 0,
        }
    }

    /// Inserts and returns the evicted item, if any.
    pub fn push(&mut self, score: f64, item: T) -> Option<(f64, T)> {
        self.entries.insert((OrderedFloat(score), Reverse(self.next)), item);
        self.next += 1;
        if self.entries.len() > self.cap {
            return self.entries.pop_first().map(|((s, _), v)| (s.0, v));
        }
        None
    }

    pub fn pop_max(&mut self) -> Option<(f64, T)> {
        self.entries.pop_last().map(|((s, _), v)| (s.0, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub best_score: f64,
    pub popped_score: f64,
    pub queue_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: Candidate,
    pub seed_scores: Vec<f64>,
    pub trace: Vec<TraceRow>,
    pub evaluated: usize,
}

impl SearchResult {
    /// Writes `iteration,best_score,popped_score,queue_size`.
    pub fn write_trace_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["iteration", "best_score", "popped_score", "queue_size"])?;
        for t in &self.trace {
            w.write_record([
                t.iteration.to_string(),
                fmt_f64(t.best_score),
                fmt_f64(t.popped_score),
                t.queue_size.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn best_seed_score(&self) -> f64 {
        self.seed_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Seed designs: one per rule, with ψ1 = ψ2 = rule, on one shared partition.
pub fn seed_designs(pop: &Population, config: &SearchConfig) -> Result<Vec<NmsDesign>> {
    let partition = up_balanced_clustering_with(
        pop,
        None,
        rng::derive(config.seed, rng::tag::NMEANS_INIT),
        &config.nms.clustering,
    )?;
    config
        .seeds
        .iter()
        .map(|&rule| {
            let cfg = NmsConfig {
                psi1: rule,
                psi2: rule,
                ..config.nms.clone()
            };
            NmsDesign::from_partition(pop, partition.clone(), cfg, config.seed)
        })
        .collect()
}

/// Rebuilds a candidate from its seed design and edit list.
pub fn replay(pop: &Population, seed_design: &NmsDesign, edits: &[Edit]) -> Result<NmsDesign> {
    let mut d = seed_design.clone();
    for &e in edits {
        apply_edit(pop, &mut d, e)?;
    }
    d.rebuild(pop)?;
    Ok(d)
}

pub fn greedy_search(pop: &Population, config: &SearchConfig) -> Result<SearchResult> {
    config.validate()?;
    let seeds = seed_designs(pop, config)?;
    greedy_search_from(pop, seeds, config)
}

/// Search starting from caller-supplied seed designs.
pub fn greedy_search_from(pop: &Population, seeds: Vec<NmsDesign>, config: &SearchConfig) -> Result<SearchResult> {
    config.validate()?;
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one seed design is required".into()));
    }
    let scorer = Scorer::new(pop, config.index, config.mode, rng::derive(config.seed, rng::tag::DISPARITY))?;
    let mut queue: CandidateQueue<Candidate> = CandidateQueue::new(config.queue_cap);
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut next_id = 0u64;
    let mut seed_scores = Vec::with_capacity(seeds.len());
    let mut best: Option<Candidate> = None;
    let mut evaluated = 0usize;

    for (origin, design) in seeds.into_iter().enumerate() {
        let score = scorer.score(&design)?.score;
        evaluated += 1;
        seed_scores.push(score);
        if !seen.insert(design.total_order().to_vec()) {
            continue;
        }
        let cand = Candidate {
            id: next_id,
            design,
            score,
            origin,
            provenance: Vec::new(),
        };
        next_id += 1;
        if best.as_ref().is_none_or(|b| score > b.score) {
            best = Some(cand.clone());
        }
        queue.push(score, cand);
    }
    let mut best = best.expect("at least one seed");
    let mut trace = Vec::new();
    let mut rng = rng::stream(rng::derive(config.seed, rng::tag::SEARCH), rng::tag::SEARCH);
    let reached = |b: &Candidate| config.target.is_some_and(|t| b.score >= t);

    for iteration in 1..=config.iterations {
        if reached(&best) {
            break;
        }
        let Some((popped_score, parent)) = queue.pop_max() else { break };
        let plans: Vec<Vec<Edit>> = (0..config.children)
            .map(|_| (0..config.edits).filter_map(|_| draw_edit(&parent.design, &mut rng)).collect())
            .collect();
        let children: Vec<Option<(NmsDesign, Vec<Edit>, f64)>> = plans
            .into_par_iter()
            .map(|edits| {
                let mut d = parent.design.clone();
                for &e in &edits {
                    apply_edit(pop, &mut d, e).ok()?;
                }
                d.rebuild(pop).ok()?;
                let score = scorer.score(&d).ok()?.score;
                Some((d, edits, score))
            })
            .collect();
        for (design, edits, score) in children.into_iter().flatten() {
            evaluated += 1;
            if !seen.insert(design.total_order().to_vec()) {
                continue;
            }
            let mut provenance = parent.provenance.clone();
            provenance.extend(edits);
            let cand = Candidate {
                id: next_id,
                design,
                score,
                origin: parent.origin,
                provenance,
            };
            next_id += 1;
            if score > best.score {
                best = cand.clone();
            }
            queue.push(score, cand);
        }
        trace.push(TraceRow {
            iteration,
            best_score: best.score,
            popped_score,
            queue_size: queue.len(),
        });
    }
    Ok(SearchResult {
        best,
        seed_scores,
        trace,
        evaluated,
    })
}
