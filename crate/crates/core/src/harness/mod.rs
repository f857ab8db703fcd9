//! Experiment harness: study populations, baseline designs and the Monte
//! Carlo driver behind the command-line tool.

pub mod designs;
pub mod population;
pub mod simulate;

pub use designs::{kmeans_reduce, lpm1_sample, srs_sample, DesignKind};
pub use population::{gen_population, inclusion_probabilities, Layout, PopulationSpec, ProbabilityMode};
pub use simulate::{run_monte_carlo, summarize, IndexRow, RunReport, SimulationConfig, Summary, BI_SUMMARY_CLIP};
