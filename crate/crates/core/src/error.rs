use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum QthermError {
    #[error("matrix is not Hermitian (relative defect {defect:.3e})")]
    NotHermitian { defect: f64 },
    #[error("iteration did not converge: {0}")]
    ConvergenceFailure(String),
    #[error("function undefined on spectrum: {0}")]
    DomainError(String),
    #[error("dimension {dim} exceeds the configured maximum {max}")]
    Overflow { dim: usize, max: usize },
    #[error("exponent overflow: {0}")]
    ExponentOverflow(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("state is not faithful (smallest eigenvalue {min_eig:.3e})")]
    Faithfulness { min_eig: f64 },
    #[error("time reversal does not reverse the dynamics (defect {defect:.3e})")]
    IncompatibleTimeReversal { defect: f64 },
    #[error("state is not invariant (defect {defect:.3e})")]
    NotInvariant { defect: f64 },
    #[error("adaptive quadrature exceeded its budget of {budget} intervals")]
    QuadratureFailure { budget: usize },
    #[error("system is not time-reversal invariant (defect {defect:.3e})")]
    NotTri { defect: f64 },
    #[error("frequency grid error: {0}")]
    Grid(String),
    #[error("matrix logarithm branch failure: eigenvalue {0} on the closed negative real axis")]
    LogBranch(String),
    #[error("one-particle symbol out of range: {0}")]
    SymbolRange(String),
    #[error("ancilla state has zero coherence between the sigma_z eigenvectors")]
    ZeroCoherence,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = QthermError> = std::result::Result<T, E>;
