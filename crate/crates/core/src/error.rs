use thiserror::Error;

/// Errors raised by the samplers, the identification algebra and the I/O layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("truncation region [{lo}, {hi}] carries negligible probability mass under the conditional")]
    NegligibleMass { lo: f64, hi: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("empty feasible region: {0}")]
    EmptyRegion(String),

    #[error("assumption refuted by the observed moments: {0}")]
    AssumptionRefuted(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("rank-deficient design, collinear columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),

    #[error("sampler step `{step}` failed at iteration {iteration}: {source}")]
    Chain {
        iteration: usize,
        step: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("scenario aborted: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Broad failure class, used for process exit codes and the C status codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) => ErrorKind::Config,
            Error::Data(_) | Error::RankDeficient(_) | Error::Csv(_) | Error::Io(_) => {
                ErrorKind::Data
            }
            Error::Json(_) => ErrorKind::Config,
            Error::Chain { source, .. } => source.kind(),
            Error::NotPositiveDefinite(_)
            | Error::NegligibleMass { .. }
            | Error::Infeasible(_)
            | Error::EmptyRegion(_)
            | Error::AssumptionRefuted(_)
            | Error::Scenario(_) => ErrorKind::Numerical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

pub type Result<T> = std::result::Result<T, Error>;
