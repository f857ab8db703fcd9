use thiserror::Error;

/// Errors raised across the sampling toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("inclusion probabilities sum to {total}, which is not within 1e-9 of an integer")]
    NonIntegerTotal { total: f64 },
    #[error("unit {unit} has inclusion probability {value} outside (0, 1]")]
    OutOfRangeProbability { unit: usize, value: f64 },
    #[error("unit {unit} has a non-finite coordinate")]
    NonFiniteCoordinate { unit: usize },
    #[error("population is empty or has zero expected sample size")]
    EmptyPopulation,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("sampled unit {unit} has zero inclusion probability")]
    ZeroProbabilityMember { unit: usize },
    #[error("joint inclusion probability of units {a} and {b} is zero")]
    ZeroJointProbability { a: usize, b: usize },
    #[error("expanded frame has {size} points, above the cap of {cap}")]
    ExpansionTooLarge { size: usize, cap: usize },
    #[error("sample is empty")]
    EmptySample,
    #[error("weighting matrix is singular or not positive definite")]
    SingularQ,
    #[error("units {a} and {b} are neighbours at zero distance")]
    CoincidentNeighbors { a: usize, b: usize },
    #[error("sample is empty or equals the whole population")]
    DegenerateSample,
    #[error("bandwidth matrix is singular or not positive definite")]
    SingularBandwidth,
    #[error("{samples} sample units cannot be matched to {centroids} centroids")]
    CardinalityMismatch { samples: usize, centroids: usize },
    #[error("border unit {unit} is not shared by path-adjacent clusters")]
    InconsistentBorders { unit: usize },
    #[error("sample size {n} exceeds population size {population}")]
    InfeasibleProbabilities { n: usize, population: usize },
    #[error("operation requires {expected}-dimensional coordinates, population has {found}")]
    UnsupportedDimension { expected: usize, found: usize },
    #[error("unit {unit} is out of range for a population of {population}")]
    UnknownUnit { unit: usize, population: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
