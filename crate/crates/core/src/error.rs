use thiserror::Error;

/// Failures raised by the linearity test and its supporting machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("need n >= k + 2 observations, got n = {n} with k = {k} covariates")]
    TooFewObservations { n: usize, k: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("constant predictor: range(x) = 0")]
    ConstantPredictor,

    #[error("covariate matrix is rank deficient (rank {rank} < {k} columns)")]
    RankDeficient { rank: usize, k: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Cholesky failed even after the maximum jitter was added.
    #[error("numerical failure at xi = {xi}: {context}")]
    Numerical { xi: f64, context: String },

    #[error("all {0} importance draws failed numerically")]
    AllDrawsFailed(usize),
}

impl Error {
    /// True for failures caused by the data rather than by arithmetic.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Dimension(_)
                | Error::NonFinite(_)
                | Error::TooFewObservations { .. }
                | Error::ConstantPredictor
                | Error::RankDeficient { .. }
        )
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical { .. } | Error::AllDrawsFailed(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
