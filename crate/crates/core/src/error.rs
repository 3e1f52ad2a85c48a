use crate::solver::SolverResult;

/// Crate-wide error type.
///
/// `Usage` marks caller mistakes that a CLI should report as exit code 2
/// (bad flags, malformed config, undersized Monte Carlo budgets). The other
/// variants are domain or runtime failures surfaced to exit code 1.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("ill-posed problem: {0}")]
    IllPosed(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("attacker state not initialized: {0}")]
    NotInitialized(String),

    #[error("no feasible grid point: {0}")]
    OracleEmpty(String),

    #[error("dimension mismatch: {0}")]
    Mismatch(String),

    #[error("barrier solver stalled after {iterations} iterations: {message}")]
    Barrier {
        iterations: usize,
        message: String,
        /// Feasible warm-start solution, usable but flagged suboptimal.
        fallback: Box<SolverResult>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors a command-line front end should treat as usage
    /// mistakes (exit code 2) rather than failed runs (exit code 1).
    #[must_use]
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Usage(_) | Error::Parse(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
