use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("vehicle {vehicle} has no associated roadside objects")]
    NoObjects { vehicle: usize },

    #[error("interval {interval} is the last of {total}; cannot advance")]
    IntervalOutOfRange { interval: usize, total: usize },

    #[error("channel gains have not been realized for interval {0}")]
    ChannelsNotRealized(usize),

    #[error("policy shape {found:?} does not match snapshot shape {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },

    #[error(
        "degenerate policy: information ratio is zero on assigned link ({vehicle}, {object}, {rb})"
    )]
    DegeneratePolicy {
        vehicle: usize,
        object: usize,
        rb: usize,
    },

    #[error("total power consumption is zero; energy efficiency undefined")]
    UndefinedEfficiency,

    #[error("SCA expansion point must be positive, got {0}")]
    ExpansionPoint(f64),

    #[error("surrogate SINR is not positive on assigned link ({vehicle}, {object}, {rb})")]
    SurrogateDomain {
        vehicle: usize,
        object: usize,
        rb: usize,
    },

    #[error("no candidate objects for vehicle {vehicle} on resource block {rb}")]
    EmptyCandidates { vehicle: usize, rb: usize },

    #[error("oracle instance exceeds caps: {0}")]
    OracleCaps(String),

    #[error("invalid sweep specification: {0}")]
    Sweep(String),

    #[error("nothing to emit: result table is empty")]
    EmptyTable,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
