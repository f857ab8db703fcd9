//! Graphical fixed-size sampling.
//!
//! Units are laid out as bars on [0, 1] in a given order. A bar that would
//! cross 1 is split and its remainder starts the next stack at 0, so the
//! bars form n stacks that each tile [0, 1]. One uniform r selects, in every
//! stack, the unit whose piece contains r.
//!
//! Pieces are half-open (start, end] except the first piece of each stack,
//! which is closed at 0. Cumulative sums are carried in integers scaled by
//! 10^12 whenever every π has at most twelve decimals and the scaled values
//! sum to exactly n · 10^12.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::JointInclusionMatrix;
use crate::population::{fmt_f64, Population, Sample};
use crate::rng;

const SCALE: i64 = 1_000_000_000_000;
const FLOAT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub unit: usize,
    pub stack: usize,
    pub start: f64,
    pub end: f64,
    /// Endpoints in units of 10^-12 when the layout is exact.
    pub exact: Option<(i64, i64)>,
}

impl Piece {
    pub fn len(&self) -> f64 {
        match self.exact {
            Some((a, b)) => (b - a) as f64 / SCALE as f64,
            None => self.end - self.start,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() <= 0.0
    }

    /// Membership under the (start, end] convention, closed at 0 for the
    /// first piece of a stack.
    pub fn contains(&self, r: f64) -> bool {
        (self.start < r && r <= self.end) || (self.start == 0.0 && r == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarLayout {
    units: usize,
    stacks: usize,
    order: Vec<usize>,
    /// Pieces grouped by stack, each stack sorted by start.
    pieces: Vec<Piece>,
}

/// Decimal-scaled integer form of π, when it has at most twelve decimals.
fn scaled_integer(p: f64) -> Option<i64> {
    let text = format!("{p}");
    let (int, frac) = match text.split_once('.') {
        Some((i, f)) => (i, f),
        None => (text.as_str(), ""),
    };
    if frac.len() > 12 || int.starts_with('-') {
        return None;
    }
    let whole: i64 = int.parse().ok()?;
    let mut digits = frac.to_string();
    while digits.len() < 12 {
        digits.push('0');
    }
    let part: i64 = if digits.is_empty() { 0 } else { digits.parse().ok()? };
    Some(whole * SCALE + part)
}

fn exact_masses(pi: &[f64], n: usize) -> Option<Vec<i64>> {
    let masses: Option<Vec<i64>> = pi.iter().map(|&p| scaled_integer(p)).collect();
    let masses = masses?;
    let total: i64 = masses.iter().sum();
    (total == n as i64 * SCALE).then_some(masses)
}

/// Lays out bars of `mass[order[k]]` and returns the pieces. Fails if the
/// stacks do not close exactly at `stacks` full intervals.
fn layout(mass: &[f64], order: &[usize], stacks: usize) -> Result<Vec<Piece>> {
    let mut pieces = Vec::with_capacity(order.len() + stacks);
    if let Some(ints) = exact_masses(mass, stacks) {
        let mut stack = 0usize;
        let mut level = 0i64;
        for &u in order {
            let len = ints[u];
            let room = SCALE - level;
            let (first, rest) = if len <= room { (len, 0) } else { (room, len - room) };
            if first > 0 {
                pieces.push(exact_piece(u, stack, level, level + first));
            }
            level += first;
            if level == SCALE {
                stack += 1;
                level = 0;
            }
            if rest > 0 {
                pieces.push(exact_piece(u, stack, 0, rest));
                level = rest;
                if level == SCALE {
                    stack += 1;
                    level = 0;
                }
            }
        }
        if stack != stacks || level != 0 {
            return Err(Error::InvalidArgument("bars do not tile whole stacks".into()));
        }
        return Ok(pieces);
    }

    let mut stack = 0usize;
    let mut level = 0.0f64;
    for &u in order {
        let mut remaining = mass[u];
        while remaining > FLOAT_TOLERANCE {
            let room = 1.0 - level;
            if remaining <= room + FLOAT_TOLERANCE {
                let end = if level + remaining >= 1.0 - FLOAT_TOLERANCE { 1.0 } else { level + remaining };
                pieces.push(float_piece(u, stack, level, end));
                level = end;
                remaining = 0.0;
            } else {
                pieces.push(float_piece(u, stack, level, 1.0));
                remaining -= room;
                level = 1.0;
            }
            if level >= 1.0 {
                stack += 1;
                level = 0.0;
            }
        }
    }
    if stack != stacks || level > FLOAT_TOLERANCE {
        return Err(Error::InvalidArgument("bars do not tile whole stacks".into()));
    }
    Ok(pieces)
}

fn exact_piece(unit: usize, stack: usize, a: i64, b: i64) -> Piece {
    Piece {
        unit,
        stack,
        start: a as f64 / SCALE as f64,
        end: b as f64 / SCALE as f64,
        exact: Some((a, b)),
    }
}

fn float_piece(unit: usize, stack: usize, start: f64, end: f64) -> Piece {
    Piece {
        unit,
        stack,
        start,
        end,
        exact: None,
    }
}

fn check_order(order: &[usize], size: usize) -> Result<()> {
    if order.len() != size {
        return Err(Error::DimensionMismatch {
            expected: size,
            found: order.len(),
        });
    }
    let mut seen = vec![false; size];
    for &u in order {
        if u >= size || seen[u] {
            return Err(Error::InvalidArgument("order is not a permutation of the units".into()));
        }
        seen[u] = true;
    }
    Ok(())
}

/// Builds the bar layout of a population in the given unit order.
pub fn build_bars(pop: &Population, order: &[usize]) -> Result<BarLayout> {
    check_order(order, pop.len())?;
    let pieces = layout(pop.pi(), order, pop.sample_size())?;
    Ok(BarLayout {
        units: pop.len(),
        stacks: pop.sample_size(),
        order: order.to_vec(),
        pieces,
    })
}

/// A uniformly random unit order from the given seed.
pub fn random_order(size: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..size).collect();
    order.shuffle(&mut rng::stream(seed, rng::tag::DESIGN_DRAW));
    order
}

/// One `(start, end]` interval of r on which the drawn sample is constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportInterval {
    pub start: f64,
    pub end: f64,
    pub sample: Sample,
}

impl SupportInterval {
    pub fn probability(&self) -> f64 {
        self.end - self.start
    }
}

impl BarLayout {
    pub fn units(&self) -> usize {
        self.units
    }

    pub fn stacks(&self) -> usize {
        self.stacks
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn is_exact(&self) -> bool {
        self.pieces.iter().all(|p| p.exact.is_some())
    }

    pub fn pieces_of(&self, unit: usize) -> Vec<&Piece> {
        self.pieces.iter().filter(|p| p.unit == unit).collect()
    }

    pub fn stack_pieces(&self, stack: usize) -> &[Piece] {
        let lo = self.pieces.partition_point(|p| p.stack < stack);
        let hi = self.pieces.partition_point(|p| p.stack <= stack);
        &self.pieces[lo..hi]
    }

    /// Unit selected in every stack for `r ∈ [0, 1)`.
    pub fn draw_sample(&self, r: f64) -> Sample {
        let mut members = Vec::with_capacity(self.stacks);
        for s in 0..self.stacks {
            let pieces = self.stack_pieces(s);
            let i = if r <= 0.0 {
                0
            } else {
                pieces.partition_point(|p| p.end < r).min(pieces.len() - 1)
            };
            members.push(pieces[i].unit);
        }
        Sample::new(members)
    }

    /// Draws with a fresh uniform r from the generator.
    pub fn draw<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Sample {
        self.draw_sample(rng.random::<f64>())
    }

    fn breakpoints(&self) -> Vec<(f64, Option<i64>)> {
        let mut pts: Vec<(f64, Option<i64>)> = Vec::with_capacity(2 * self.pieces.len());
        for p in &self.pieces {
            match p.exact {
                Some((a, b)) => {
                    pts.push((p.start, Some(a)));
                    pts.push((p.end, Some(b)));
                }
                None => {
                    pts.push((p.start, None));
                    pts.push((p.end, None));
                }
            }
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.dedup_by(|a, b| a.0 == b.0);
        pts
    }

    /// Exact sample space: consecutive breakpoint intervals with the sample
    /// drawn on each, adjacent intervals with equal samples merged.
    pub fn enumerate_support(&self) -> Vec<SupportInterval> {
        let pts = self.breakpoints();
        let mut out: Vec<SupportInterval> = Vec::new();
        for w in pts.windows(2) {
            let (a, b) = (w[0].0, w[1].0);
            if b <= a {
                continue;
            }
            let sample = self.draw_sample(b);
            match out.last_mut() {
                Some(last) if last.sample == sample => last.end = b,
                _ => out.push(SupportInterval { start: a, end: b, sample }),
            }
        }
        out
    }

    /// π_ℓℓ' as the overlap measure of the two units' coverage sets.
    pub fn joint_inclusion(&self) -> JointInclusionMatrix {
        let mut m = JointInclusionMatrix::zeros(self.units);
        for (i, p) in self.pieces.iter().enumerate() {
            for q in &self.pieces[i..] {
                let overlap = match (p.exact, q.exact) {
                    (Some((a1, b1)), Some((a2, b2))) => (b1.min(b2) - a1.max(a2)).max(0) as f64 / SCALE as f64,
                    _ => (p.end.min(q.end) - p.start.max(q.start)).max(0.0),
                };
                if overlap > 0.0 {
                    m.add(p.unit, q.unit, overlap);
                    if !std::ptr::eq(p, q) {
                        m.add(q.unit, p.unit, overlap);
                    }
                }
            }
        }
        m
    }

    /// Support-weighted inclusion frequency of every unit.
    pub fn inclusion_frequencies(&self) -> Vec<f64> {
        let mut f = vec![0.0; self.units];
        for iv in self.enumerate_support() {
            for &u in iv.sample.members() {
                f[u] += iv.probability();
            }
        }
        f
    }

    /// Writes `unit,piece_start,piece_end,stack` with 1-based ids.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["unit", "piece_start", "piece_end", "stack"])?;
        for p in &self.pieces {
            w.write_record([
                (p.unit + 1).to_string(),
                fmt_f64(p.start),
                fmt_f64(p.end),
                (p.stack + 1).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exam1() -> Population {
        let pi = vec![0.7, 0.3, 0.4, 0.8, 0.3, 0.65, 0.45, 0.2, 0.2];
        Population::new((1..=9).map(|i| vec![i as f64]).collect(), pi).unwrap()
    }

    fn identity(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    #[test]
    fn worked_example_layout() {
        let layout = build_bars(&exam1(), &identity(9)).unwrap();
        assert!(layout.is_exact());
        assert_eq!(layout.pieces().len(), 11);
        assert_eq!(layout.stacks(), 4);
        let p4: Vec<(f64, f64, usize)> = layout.pieces_of(3).iter().map(|p| (p.start, p.end, p.stack)).collect();
        assert_eq!(p4, vec![(0.4, 1.0, 1), (0.0, 0.2, 2)]);
        assert_eq!(layout.draw_sample(0.5).ids(), vec![1, 4, 5, 7]);
        assert_eq!(layout.draw_sample(1e-9).ids(), vec![1, 3, 4, 6]);
        assert_eq!(layout.draw_sample(0.0).ids(), vec![1, 3, 4, 6]);
    }

    #[test]
    fn stacks_tile_the_unit_interval() {
        let layout = build_bars(&exam1(), &[8, 2, 5, 0, 7, 1, 4, 3, 6]).unwrap();
        for s in 0..layout.stacks() {
            let ps = layout.stack_pieces(s);
            assert_eq!(ps[0].start, 0.0);
            assert_eq!(ps.last().unwrap().end, 1.0);
            for w in ps.windows(2) {
                assert_eq!(w[0].end, w[1].start);
            }
        }
    }

    #[test]
    fn trivial_layouts() {
        let pop = Population::new(vec![vec![0.0]], vec![1.0]).unwrap();
        let l = build_bars(&pop, &[0]).unwrap();
        assert_eq!(l.pieces().len(), 1);
        assert_eq!(l.draw_sample(0.3).ids(), vec![1]);

        let pop = Population::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5]).unwrap();
        let l = build_bars(&pop, &[0, 1]).unwrap();
        assert_eq!(l.stacks(), 1);
        let sup = l.enumerate_support();
        assert_eq!(sup.len(), 2);
        assert_eq!(sup[0].sample.ids(), vec![1]);
        assert_eq!(sup[1].sample.ids(), vec![2]);
    }

    #[test]
    fn joint_probabilities_from_overlaps() {
        let layout = build_bars(&exam1(), &identity(9)).unwrap();
        let j = layout.joint_inclusion();
        assert_eq!(j.get(0, 1), 0.0);
        assert!((j.get(0, 2) - 0.4).abs() < 1e-15);
        for u in 0..9 {
            assert!((j.get(u, u) - exam1().pi()[u]).abs() < 1e-15);
        }
        assert!(j.fixed_size_defect(4) < 1e-12);

        let pop = Population::new((0..3).map(|i| vec![i as f64]).collect(), vec![1.0, 0.5, 0.5]).unwrap();
        let j = build_bars(&pop, &[0, 1, 2]).unwrap().joint_inclusion();
        assert_eq!(j.get(0, 1), 0.5);
        assert_eq!(j.get(0, 2), 0.5);
    }

    #[test]
    fn support_reproduces_first_order_probabilities() {
        let pop = exam1();
        let layout = build_bars(&pop, &identity(9)).unwrap();
        let sup = layout.enumerate_support();
        assert!(sup.len() <= 11);
        assert!(sup.iter().all(|s| s.sample.len() == 4));
        for (f, p) in layout.inclusion_frequencies().iter().zip(pop.pi()) {
            assert!((f - p).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_probabilities_give_systematic_sampling() {
        let pop = Population::new((0..9).map(|i| vec![i as f64]).collect(), vec![4.0 / 9.0; 9]).unwrap();
        let layout = build_bars(&pop, &identity(9)).unwrap();
        assert!(!layout.is_exact());
        let sup = layout.enumerate_support();
        // Systematic sampling with step 9/4 from a start in (0, 9/4].
        for iv in &sup {
            let r = 0.5 * (iv.start + iv.end);
            let start = r * 9.0 / 4.0;
            let oracle: Vec<usize> = (0..4).map(|k| (start + k as f64 * 9.0 / 4.0).ceil() as usize).collect();
            assert_eq!(iv.sample.ids(), oracle);
        }
        let total: f64 = sup.iter().map(SupportInterval::probability).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn layout_csv_header() {
        let layout = build_bars(&exam1(), &identity(9)).unwrap();
        let mut buf = Vec::new();
        layout.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("unit,piece_start,piece_end,stack\n1,0,0.7,1\n"));
        assert_eq!(text.lines().count(), 12);
    }
}
