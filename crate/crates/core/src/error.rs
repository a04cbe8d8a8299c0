use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("entry ({0}, {1}) lies outside the declared support")]
    OffSupport(usize, usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate spectrum: {0} and {1} MHz coincide")]
    Degenerate(f64, f64),

    #[error("signal supports fewer modes than requested (singular value ratio {ratio:e} below {threshold:e})")]
    RankDeficient { ratio: f64, threshold: f64 },

    #[error("value {0} outside the physical range [-1/2, 1/2]")]
    OutOfRange(f64),

    #[error("every anchor slice was rank deficient")]
    AllAnchorsSkipped,

    #[error("no optimizer restart converged")]
    NoConvergence,

    #[error("bootstrap unreliable: {failures} of {total} resamples failed")]
    UnreliableBootstrap { failures: usize, total: usize },

    #[error("coverage {reached} < {required} unreachable within {iterations} draws")]
    CoverageUnreachable {
        reached: usize,
        required: usize,
        iterations: usize,
    },

    #[error("calibration needs at least 3 distinct ramp distances, got {0}")]
    TooFewDistances(usize),

    #[error("identification failed: {0}")]
    Identification(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
