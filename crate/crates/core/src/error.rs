use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("assembly check failed: {0}")]
    Assembly(String),

    #[error("rank deficient flux matrix: smallest singular value {smallest:e}")]
    RankDeficient { smallest: f64 },

    #[error("boundary matrix L is not positive definite: smallest eigenvalue {0:e}")]
    NotPositiveDefinite(f64),

    #[error("ill-conditioned characteristic matrix (condition number {0:e})")]
    IllConditioned(f64),

    #[error("penalty parameter alpha={0} outside [0, 1]: the SAT stability condition x'L(-tau)'Lx <= x'Lx fails")]
    PenaltyOutOfRange(f64),

    #[error("SBP closure infeasible: {0}")]
    Closure(String),

    #[error("time step {dt:e} exceeds the stability limit {limit:e}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("non-finite value in solution at t={t}")]
    NonFinite { t: f64 },

    #[error("scattering kernel cannot be sampled: {0}")]
    NotSampleable(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
