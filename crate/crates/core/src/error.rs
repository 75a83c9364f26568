use thiserror::Error;

/// Errors raised while building a data-generating process or evaluating an
/// estimand on it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid action space: {0}")]
    InvalidActionSpace(String),

    #[error("P{{D={d}, A={atom}}} = {value} is not positive (full-support mode)")]
    NonPositiveCell { d: u8, atom: String, value: f64 },

    #[error("probability entries must be finite and non-negative, got {value} at D={d}, A={atom}")]
    NegativeProbability { d: u8, atom: String, value: f64 },

    #[error("probabilities sum to {sum}, expected 1 within 1e-12")]
    ProbabilitySum { sum: f64 },

    #[error("table `{table}` has no entry for {cell}")]
    MissingTableEntry { table: String, cell: String },

    #[error("table `{table}` has an entry for {cell}, which is outside the declared support")]
    UnknownTableEntry { table: String, cell: String },

    #[error("strong mode requires nu(d', d, a) = mu(d', a); differs by {gap} at {cell}")]
    StrongModeInconsistency { cell: String, gap: f64 },

    #[error("invalid value in table `{table}` at {cell}: {reason}")]
    InvalidValue {
        table: String,
        cell: String,
        reason: String,
    },

    #[error("{regression} design is singular: smallest eigenvalue {min_eigenvalue:e} <= 1e-10")]
    SingularDesign {
        regression: String,
        min_eigenvalue: f64,
    },

    #[error("sample {regression} design is singular: smallest eigenvalue {min_eigenvalue:e}")]
    SingularSampleDesign {
        regression: String,
        min_eigenvalue: f64,
    },

    #[error("covariance expansion of {quantity} disagrees with direct computation: {direct} vs {expansion}")]
    ExpansionMismatch {
        quantity: String,
        direct: f64,
        expansion: f64,
    },

    #[error("this decomposition needs a scalar action, got K = {k}")]
    NotScalarAction { k: usize },

    #[error("{operation} is only defined under strong exogeneity")]
    WeakModeUnsupported { operation: String },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    /// True for errors that describe malformed or inconsistent inputs, as
    /// opposed to rank failures of a regression design.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::SingularDesign { .. }
                | Error::SingularSampleDesign { .. }
                | Error::ExpansionMismatch { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
