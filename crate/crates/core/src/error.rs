use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// A state that must be full rank has an eigenvalue at or below the floor.
    #[error("rank-deficient state: minimum eigenvalue {min_eigenvalue:e} <= floor {floor:e}")]
    RankDeficientState { min_eigenvalue: f64, floor: f64 },

    #[error("support violation at index {index}: reference probability is zero where target is positive")]
    SupportViolation { index: usize },

    #[error("unknown outcome label `{0}`")]
    UnknownOutcome(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("parameter {theta:?} lies outside the model domain")]
    OutOfDomain { theta: Vec<f64> },

    #[error("Metropolis-Hastings burn-in acceptance {acceptance:e} below 0.001; check step_scale and domain")]
    AllProposalsRejected { acceptance: f64 },

    #[error("no initial point with finite posterior density found after {tried} draws")]
    InitializationFailed { tried: usize },

    #[error("finite-difference stencil leaves the domain in dimension {dim} (step {step:e})")]
    BoundaryTooClose { dim: usize, step: f64 },

    #[error("non-finite finite-difference derivative for {quantity}")]
    NonFiniteDerivative { quantity: &'static str },

    #[error("singular Hessian (condition number {condition:e})")]
    SingularHessian { condition: f64 },

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed data in {path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("run n={n} rep={rep} failed: {source}")]
    Run {
        n: usize,
        rep: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
