//! Error type shared by all modules.

/// Errors produced by the library.
///
/// The CLI maps these onto exit codes: configuration/validation/domain
/// problems are usage errors, solver diagnostics signal that no equilibrium
/// was found at the requested tolerances.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A structural invariant of an input object is violated.
    #[error("validation error: {0}")]
    Validation(String),

    /// The operation requires structure the input does not have
    /// (e.g. junction trees require a perfect DAG).
    #[error("unsupported structure: {0}")]
    UnsupportedStructure(String),

    /// A scenario file or builtin name could not be interpreted.
    #[error("config error: {0}")]
    Config(String),

    /// The solver finished its scan without finding an equilibrium.
    #[error("solver diagnostic: {0}")]
    Solver(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
