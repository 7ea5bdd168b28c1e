//! Library-wide error type.

#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// Geometry with zero extent or otherwise unusable parameters.
    DegenerateGeometry(String),
    /// Requested hierarchy/mesh level outside the valid range.
    LevelOutOfRange { level: usize, max: usize },
    /// Invalid polynomial degree for the requested element pair.
    InvalidDegree(String),
    /// Vector length does not match the operator/transfer layout.
    SizeMismatch { expected: usize, got: usize },
    NonPositiveTimeStep,
    NonPositiveViscosity,
    /// Direct coarse factorization failed on the given hierarchy level.
    SingularCoarseMatrix { level: usize },
    /// Singular additive-Schwarz patch matrix, tagged with its cell.
    SingularPatch { cell: usize },
    /// Krylov breakdown (zero denominator) at the given iteration.
    Breakdown { iteration: usize },
    /// Nonlinear solve diverged; message carries the residual history.
    Diverged(String),
    /// Slab-march failure wrapping the offending slab index.
    Slab { slab: usize, reason: Box<Error> },
    /// Catch-all for precondition violations described in the message.
    Invalid(String),
}

impl std::fmt::Display for Error {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Error::DegenerateGeometry(msg) => write!(f, "degenerate geometry: {msg}"),
            Error::LevelOutOfRange { level, max } => {
                write!(f, "level {level} out of range (max {max})")
            }
            Error::InvalidDegree(msg) => write!(f, "invalid degree: {msg}"),
            Error::SizeMismatch { expected, got } => {
                write!(f, "size mismatch: expected {expected}, got {got}")
            }
            Error::NonPositiveTimeStep => write!(f, "time step must be positive"),
            Error::NonPositiveViscosity => write!(f, "viscosity must be positive"),
            Error::SingularCoarseMatrix { level } => {
                write!(f, "singular coarse matrix on level {level}")
            }
            Error::SingularPatch { cell } => write!(f, "singular patch matrix at cell {cell}"),
            Error::Breakdown { iteration } => {
                write!(f, "krylov breakdown at iteration {iteration}")
            }
            Error::Diverged(msg) => write!(f, "solver diverged: {msg}"),
            Error::Slab { slab, reason } => write!(f, "slab {slab} failed: {reason}"),
            Error::Invalid(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
