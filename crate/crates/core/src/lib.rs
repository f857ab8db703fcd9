//! Spatially balanced sampling from finite populations.
//!
//! Units carry coordinates and first-order inclusion probabilities summing
//! to an integer sample size `n`. The crate provides UP-balanced clustering,
//! graphical fixed-size sampling (bar layouts on `[0, 1]`), nested-zone
//! orderings with a greedy design search, the Voronoi, balanced Voronoi,
//! Moran and density disparity spread indices, Horvitz–Thompson estimation,
//! and a seeded Monte Carlo harness.

pub mod clustering;
pub mod disparity;
pub mod error;
pub mod estimate;
pub mod geometry;
pub mod gfs;
pub mod gms;
pub mod harness;
pub mod indices;
pub mod nms;
pub mod population;
pub mod rng;

pub use error::{Error, Result};
pub use estimate::{ht_variance, ht_variance_estimate, nht_estimate, JointInclusionMatrix, VarianceMode};
pub use population::{validate_population, Population, Sample};
