use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Failure modes of the numerical pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument is outside its admissible range.
    InvalidArgument(String),
    /// A material record or property field is not physically admissible.
    InvalidMaterial(String),
    /// Periodic boundary sets cannot be paired node by node.
    MeshIncompatibility(String),
    /// The constrained stiffness is singular, e.g. rigid modes left free.
    Constraint(String),
    /// A matrix that must be positive definite failed to factorize.
    NotPositiveDefinite { row: usize, pivot: f64 },
    /// The eigensolver ran out of budget.
    SolverFailure { converged: usize, wanted: usize, residual: f64 },
    /// No mode passed the relevance filter.
    NoRelevantMode,
    /// Evaluation exactly at an undamped resonance.
    Pole { omega: f64 },
    /// The condensed panel system is singular at this frequency.
    ResonanceSingularity { frequency_hz: f64 },
    /// The target resonance is below the feasibility limit.
    Infeasible { target: f64, limit: f64 },
    /// Required state is missing or inconsistent.
    State(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(m) => write!(f, "invalid argument: {m}"),
            Error::InvalidMaterial(m) => write!(f, "invalid material: {m}"),
            Error::MeshIncompatibility(m) => write!(f, "mesh incompatibility: {m}"),
            Error::Constraint(m) => write!(f, "constraint error: {m}"),
            Error::NotPositiveDefinite { row, pivot } => {
                write!(f, "matrix not positive definite (row {row}, pivot {pivot:e})")
            }
            Error::SolverFailure { converged, wanted, residual } => write!(
                f,
                "eigensolver failed: {converged}/{wanted} pairs converged, worst residual {residual:e}"
            ),
            Error::NoRelevantMode => write!(f, "no relevant mode found"),
            Error::Pole { omega } => write!(f, "undamped resonance hit at omega = {omega} rad/s"),
            Error::ResonanceSingularity { frequency_hz } => {
                write!(f, "singular panel system at {frequency_hz} Hz")
            }
            Error::Infeasible { target, limit } => write!(
                f,
                "target {target} rad/s is below the feasibility limit {limit} rad/s"
            ),
            Error::State(m) => write!(f, "state error: {m}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
