use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, found {found}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },

    #[error("matrix is singular or ill-conditioned (condition estimate {cond:.3e})")]
    IllConditioned { cond: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("zero power: {0}")]
    ZeroPower(&'static str),

    #[error("numerical breakdown in {0}")]
    Breakdown(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed feedback packet: expected {expected} bits, found {found}")]
    MalformedPacket { expected: usize, found: usize },

    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),

    #[error("CSV is missing column `{0}`")]
    MissingColumn(String),

    #[error("nothing to plot: {0}")]
    EmptyGrid(String),

    #[error("convexity bound undefined: every probe direction has a non-positive denominator")]
    BoundUndefined,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(op: &'static str, expected: impl ToString, found: impl ToString) -> Error {
    Error::DimensionMismatch {
        op,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}
