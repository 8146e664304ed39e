use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry in {0}")]
    NonFinite(String),

    #[error("non-positive value in {0}")]
    NonPositive(String),

    #[error("horizon must be at least 1")]
    ZeroHorizon,

    #[error("computation produced a non-finite result ({0})")]
    NonFiniteResult(String),

    /// The infinite-horizon Gramian diverges.
    #[error("spectral radius {spectral_radius} is not below 1; infinite-horizon Gramian diverges")]
    Divergent { spectral_radius: f64 },

    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("Gramian is rank deficient (rank {rank} < {n})")]
    RankDeficient { rank: usize, n: usize },

    #[error("direction lies in the null space of the Gramian; the set is unbounded along it")]
    UnboundedDirection,

    #[error("direction is not a unit vector (norm {0})")]
    NotUnitDirection(f64),

    #[error("analytic formulas need a single-output system, got {0} outputs")]
    MultiOutput(usize),

    #[error("eigenvalues are not distinct (minimum gap {gap:e} <= threshold {threshold:e})")]
    RepeatedEigenvalue { gap: f64, threshold: f64 },

    #[error("eigenvalue modulus {0} is outside [0, 1)")]
    UnstableEigenvalue(f64),

    #[error("eigen decomposition failed: {0}")]
    EigenFailure(String),

    #[error("zero vector where a nonzero one is required")]
    ZeroVector,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// True for errors raised because a theoretical precondition (stability,
    /// single output, distinct eigenvalues) does not hold.
    pub fn is_assumption_violation(&self) -> bool {
        matches!(
            self,
            Error::Divergent { .. }
                | Error::MultiOutput(_)
                | Error::RepeatedEigenvalue { .. }
                | Error::UnstableEigenvalue(_)
        )
    }
}
