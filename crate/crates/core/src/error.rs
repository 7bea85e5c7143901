use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("incomplete time series, missing (s, n) samples: {0:?}")]
    MissingSamples(Vec<(i8, usize)>),

    #[error("not implemented: {0}")]
    NotImplemented(String),

    #[error("matrix is not Hermitian (max |A - A^dagger| = {0:.3e})")]
    NonHermitian(f64),

    #[error("eigensolver failed to converge: {0}")]
    NoConvergence(String),

    #[error("calibration record rejected: {0}")]
    Calibration(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn at(self, stage: &'static str) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }
}
