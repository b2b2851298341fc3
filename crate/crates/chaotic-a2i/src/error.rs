use thiserror::Error;

/// Errors surfaced by the library.
///
/// Numerical failures (divergence, singular systems, degenerate statistics)
/// are separated from argument validation so callers can map them to distinct
/// exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: expected dimension {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("sparsity {w} exceeds basis size {b}")]
    SparsityTooLarge { w: usize, b: usize },

    #[error("relative error undefined: reference coefficients are all zero")]
    ZeroReference,

    #[error("step {h} does not divide interval {interval} (within 1e-9 relative)")]
    MisalignedStep { interval: f64, h: f64 },

    #[error("trajectory diverged at t = {t}: |x[{component}]| = {value:e} exceeds {bound:e}")]
    Diverged {
        t: f64,
        component: usize,
        value: f64,
        bound: f64,
    },

    #[error("column {index} is degenerate (centered norm below 1e-14); correlation undefined")]
    DegenerateColumn { index: usize },

    #[error("column {index} has zero norm; coherence undefined")]
    ZeroColumn { index: usize },

    #[error("statistic needs at least two columns, got {got}")]
    TooFewColumns { got: usize },

    #[error("no usable initial states: {reason}")]
    NoUsableStates { reason: String },

    #[error("least-squares system is numerically singular")]
    SingularSystem,

    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("trajectory too short: {len} nodes, need at least {min}")]
    TrajectoryTooShort { len: usize, min: usize },

    #[error("all {count} realizations failed; first failure: {first}")]
    AllRealizationsFailed { count: usize, first: String },

    #[error("measurement vector does not match plan: {reason}")]
    PlanMismatch { reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
