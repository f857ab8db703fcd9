//! Finite population frame and samples.
//!
//! Units are addressed internally by 0-based index. Files and the CLI use the
//! 1-based ids `1..=N`; conversion happens only at the I/O boundary.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for the integer-total check on inclusion probabilities.
pub const TOTAL_TOLERANCE: f64 = 1e-9;

/// Checks the frame invariants and returns the implied fixed sample size `n`.
///
/// Populations that fail the integer-total check are rejected, never
/// renormalized.
pub fn validate_population(dim: usize, coords: &[f64], pi: &[f64]) -> Result<usize> {
    let big_n = pi.len();
    if big_n == 0 || dim == 0 {
        return Err(Error::EmptyPopulation);
    }
    if coords.len() != big_n * dim {
        return Err(Error::DimensionMismatch {
            expected: big_n * dim,
            found: coords.len(),
        });
    }
    for (unit, row) in coords.chunks(dim).enumerate() {
        if row.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFiniteCoordinate { unit });
        }
    }
    for (unit, &value) in pi.iter().enumerate() {
        if !(value > 0.0 && value <= 1.0) {
            return Err(Error::OutOfRangeProbability { unit, value });
        }
    }
    let total: f64 = pi.iter().sum();
    let n = total.round();
    if (total - n).abs() > TOTAL_TOLERANCE {
        return Err(Error::NonIntegerTotal { total });
    }
    if n < 1.0 {
        return Err(Error::EmptyPopulation);
    }
    Ok(n as usize)
}

/// A validated population: coordinates in `dim` dimensions and first-order
/// inclusion probabilities summing to an integer `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPopulation", into = "RawPopulation")]
pub struct Population {
    dim: usize,
    coords: Vec<f64>,
    pi: Vec<f64>,
    n: usize,
}

#[derive(Serialize, Deserialize)]
struct RawPopulation {
    dim: usize,
    coords: Vec<f64>,
    pi: Vec<f64>,
}

impl TryFrom<RawPopulation> for Population {
    type Error = Error;

    fn try_from(raw: RawPopulation) -> Result<Self> {
        Population::from_flat(raw.dim, raw.coords, raw.pi)
    }
}

impl From<Population> for RawPopulation {
    fn from(p: Population) -> Self {
        RawPopulation {
            dim: p.dim,
            coords: p.coords,
            pi: p.pi,
        }
    }
}

impl Population {
    /// Builds a population from row-major flat coordinates.
    pub fn from_flat(dim: usize, coords: Vec<f64>, pi: Vec<f64>) -> Result<Self> {
        let n = validate_population(dim, &coords, &pi)?;
        Ok(Population { dim, coords, pi, n })
    }

    /// Builds a population from per-unit coordinate rows.
    pub fn new(coords: Vec<Vec<f64>>, pi: Vec<f64>) -> Result<Self> {
        let dim = coords.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(coords.len() * dim);
        for row in &coords {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        if coords.len() != pi.len() {
            return Err(Error::DimensionMismatch {
                expected: coords.len(),
                found: pi.len(),
            });
        }
        Self::from_flat(dim, flat, pi)
    }

    /// Two-dimensional convenience constructor.
    pub fn from_points(points: &[[f64; 2]], pi: Vec<f64>) -> Result<Self> {
        let flat = points.iter().flat_map(|p| p.iter().copied()).collect();
        Self::from_flat(2, flat, pi)
    }

    /// Population with equal probabilities `n / N`.
    pub fn equal_probability(points: &[[f64; 2]], n: usize) -> Result<Self> {
        if n > points.len() {
            return Err(Error::InfeasibleProbabilities {
                n,
                population: points.len(),
            });
        }
        let p = n as f64 / points.len() as f64;
        Self::from_points(points, vec![p; points.len()])
    }

    /// Returns a copy with replaced inclusion probabilities.
    pub fn with_pi(&self, pi: Vec<f64>) -> Result<Self> {
        Self::from_flat(self.dim, self.coords.clone(), pi)
    }

    /// Returns a copy with every coordinate shifted by `shift`.
    pub fn translated(&self, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: shift.len(),
            });
        }
        let coords = self
            .coords
            .chunks(self.dim)
            .flat_map(|row| row.iter().zip(shift).map(|(c, s)| c + s))
            .collect();
        Self::from_flat(self.dim, coords, self.pi.clone())
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Fixed sample size implied by the inclusion probabilities.
    pub fn sample_size(&self) -> usize {
        self.n
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn coord(&self, unit: usize) -> &[f64] {
        &self.coords[unit * self.dim..(unit + 1) * self.dim]
    }

    pub fn coords_flat(&self) -> &[f64] {
        &self.coords
    }

    /// First two coordinates (the second is 0 for one-dimensional frames).
    pub fn xy(&self, unit: usize) -> [f64; 2] {
        let c = self.coord(unit);
        [c[0], c.get(1).copied().unwrap_or(0.0)]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.dim)
    }

    pub(crate) fn check_unit(&self, unit: usize) -> Result<()> {
        if unit >= self.len() {
            return Err(Error::UnknownUnit {
                unit,
                population: self.len(),
            });
        }
        Ok(())
    }

    /// Reads the `id,x,y,pi` (or `id,c1..cD,pi`) frame format.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 3 {
            return Err(Error::Parse {
                line: 1,
                message: "expected header `id,<coords...>,pi`".into(),
            });
        }
        if &headers[0] != "id" || &headers[headers.len() - 1] != "pi" {
            return Err(Error::Parse {
                line: 1,
                message: format!("unexpected header {:?}", headers.iter().collect::<Vec<_>>()),
            });
        }
        let dim = headers.len() - 2;
        let mut coords = Vec::new();
        let mut pi = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            let line = row + 2;
            let parse = |i: usize| -> Result<f64> {
                record[i].trim().parse::<f64>().map_err(|e| Error::Parse {
                    line,
                    message: format!("column {}: {e}", i + 1),
                })
            };
            let id: usize = record[0].trim().parse().map_err(|e| Error::Parse {
                line,
                message: format!("id: {e}"),
            })?;
            if id != row + 1 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected id {}, found {id}", row + 1),
                });
            }
            for d in 0..dim {
                coords.push(parse(d + 1)?);
            }
            pi.push(parse(dim + 1)?);
        }
        Self::from_flat(dim, coords, pi)
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["id".to_string()];
        if self.dim == 2 {
            header.push("x".into());
            header.push("y".into());
        } else {
            header.extend((1..=self.dim).map(|d| format!("c{d}")));
        }
        header.push("pi".into());
        w.write_record(&header)?;
        for unit in 0..self.len() {
            let mut rec = vec![(unit + 1).to_string()];
            rec.extend(self.coord(unit).iter().map(|c| fmt_f64(*c)));
            rec.push(fmt_f64(self.pi[unit]));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest decimal form that parses back to the identical `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// A sample: sorted, de-duplicated unit indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sample {
    members: Vec<usize>,
}

impl Sample {
    pub fn new(mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        Sample { members }
    }

    /// Builds a sample and checks every member against the population.
    pub fn checked(pop: &Population, members: Vec<usize>) -> Result<Self> {
        for &u in &members {
            pop.check_unit(u)?;
        }
        Ok(Self::new(members))
    }

    /// Parses 1-based ids such as `1,4,5,7`.
    pub fn from_ids(ids: &[usize]) -> Result<Self> {
        if ids.contains(&0) {
            return Err(Error::InvalidArgument("unit ids are 1-based".into()));
        }
        Ok(Self::new(ids.iter().map(|i| i - 1).collect()))
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn ids(&self) -> Vec<usize> {
        self.members.iter().map(|u| u + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, unit: usize) -> bool {
        self.members.binary_search(&unit).is_ok()
    }

    /// Indicator vector a(S) over a population of `size` units.
    pub fn indicator(&self, size: usize) -> Vec<bool> {
        let mut a = vec![false; size];
        for &u in &self.members {
            a[u] = true;
        }
        a
    }
}
