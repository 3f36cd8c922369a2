use alloc::string::String;
use alloc::vec::Vec;

/// Errors produced by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration is missing required key `{key}`")]
    MissingKey { key: String },

    #[error("SVR solver hit its iteration cap of {iterations} updates (KKT residual {residual:e})")]
    SolverCap { iterations: usize, residual: f64 },

    #[error("linear system is singular even after adding ridge {ridge:e}")]
    Singular { ridge: f64 },

    #[error("R^2 is undefined: truths have zero variance")]
    UndefinedMetric,

    #[error("no model fitted for tau = {tau}; available: {available:?}")]
    NotFitted { tau: usize, available: Vec<usize> },

    #[error("fit failed at tau = {tau}: {source}")]
    TauFit {
        tau: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },

    #[error("all {} search candidates failed; first failure: {}", .0.len(), .0.first().map(String::as_str).unwrap_or("none"))]
    AllCandidatesFailed(Vec<String>),

    #[error("oracle failure: {0}")]
    Oracle(String),
}

impl Error {
    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Whether the error stems from bad input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Precondition(_) | Error::InvalidInput(_) | Error::MissingKey { .. } | Error::NotFitted { .. }
        )
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
