use std::fmt;

/// Errors raised across assembly, eigensolves, optimization and configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Domain extents are degenerate or not finite.
    InvalidDomain(String),
    /// Boundary data is invalid (negative σ, wrong face count, ...).
    InvalidBoundary(String),
    /// Robin condition with σ ≡ 0, which is the Neumann problem and not supported.
    NeumannExcluded,
    /// Two objects that must agree in size do not.
    SizeMismatch { expected: usize, found: usize },
    /// The stiffness matrix failed to factor as symmetric positive definite.
    NotPositiveDefinite,
    /// The eigensolver exhausted its iteration budget.
    NotConverged { iterations: usize, residual: f64 },
    /// The principal eigenfunction failed the positivity check after sign fixing.
    EigenfunctionNotPositive { min_value: f64 },
    /// Dense routine called on a problem larger than it accepts.
    TooLarge { size: usize, limit: usize },
    /// A vector that must be nonzero is zero.
    ZeroVector,
    /// A per-element weight for a pairing was negative.
    NegativeWeight { element: usize, value: f64 },
    /// The weight class is in the wrong regime for the requested operation.
    Regime(String),
    /// Stripe count incompatible with the grid.
    IncompatibleStripes { stripes: usize, cells: usize },
    /// Configuration parse or validation failure.
    Config(String),
    /// CSV parse failure.
    Parse(String),
    /// File system failure.
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidDomain(msg) => write!(f, "invalid domain: {msg}"),
            Error::InvalidBoundary(msg) => write!(f, "invalid boundary data: {msg}"),
            Error::NeumannExcluded => write!(
                f,
                "Neumann excluded: Robin condition needs sigma > 0 on some boundary face"
            ),
            Error::SizeMismatch { expected, found } => {
                write!(f, "size mismatch: expected {expected}, found {found}")
            }
            Error::NotPositiveDefinite => write!(f, "stiffness matrix is not positive definite"),
            Error::NotConverged {
                iterations,
                residual,
            } => write!(
                f,
                "eigensolver did not converge after {iterations} iterations (residual {residual:e})"
            ),
            Error::EigenfunctionNotPositive { min_value } => write!(
                f,
                "principal eigenfunction is not positive at every free node (min {min_value:e})"
            ),
            Error::TooLarge { size, limit } => {
                write!(f, "problem size {size} exceeds dense limit {limit}")
            }
            Error::ZeroVector => write!(f, "vector is zero"),
            Error::NegativeWeight { element, value } => {
                write!(f, "negative pairing weight {value} at element {element}")
            }
            Error::Regime(msg) => write!(f, "wrong regime: {msg}"),
            Error::IncompatibleStripes { stripes, cells } => write!(
                f,
                "{stripes} stripes do not partition {cells} cells along the first axis"
            ),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
            Error::Io(msg) => write!(f, "I/O error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
