use thiserror::Error;

/// Errors raised by the analysis pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A table's shape disagrees with the network dimensions.
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    /// An argument lies outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Effective bandwidths exceed the available budget.
    #[error("targets outside the user-capacity region: effective-bandwidth sum {sum:.6} exceeds budget {budget:.6}")]
    RegionViolation { sum: f64, budget: f64 },

    /// Boundary scaling pushed an effective bandwidth to 1 or above.
    #[error("boundary normalization infeasible: scaled bandwidth {value:.6} for user {user} is not below 1")]
    InfeasibleModification { user: usize, value: f64 },

    /// The source vector does not majorize the target.
    #[error("majorization fails at partial sum {index}: source {source_sum:.12} < target {target_sum:.12}")]
    Majorization {
        index: usize,
        source_sum: f64,
        target_sum: f64,
    },

    /// An internal invariant broke; unreachable for valid input.
    #[error("internal invariant violated: {0}")]
    Internal(String),

    /// Scenario document could not be parsed.
    #[error("scenario parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
