//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A physical input failed validation; names the offending field.
    #[error("invalid parameter `{field}`: {reason}")]
    Validation { field: String, reason: String },

    /// A required config key is missing.
    #[error("missing required key `{0}`")]
    MissingKey(String),

    /// Evaluation landed on (or within 1e-12 of) a pole.
    #[error("pole encountered in {context} at {location}")]
    Pole { context: String, location: String },

    /// χ̄ vanished where a finite value is required (e.g. r_b at the δ₀ resonance).
    #[error("at resonance δ₀: {0}")]
    Resonance(String),

    /// A bracketing scan found no root in the configured window.
    #[error("no root bracketed in scan window: {0}")]
    Window(String),

    /// Branch tracking became ambiguous; the q-grid needs densification.
    #[error("branch tracking ambiguous near q = {q} 1/µm (max eigenvector overlap {overlap:.3}); refine the q grid")]
    Tracking { q: f64, overlap: f64 },

    /// A quadrature failed to converge to the requested tolerance.
    #[error("quadrature did not converge: {0}")]
    Convergence(String),

    /// Requested point outside the supported grid.
    #[error("grid error: {0}")]
    Grid(String),

    /// A near-singular pole invalidates the real-axis integration path.
    #[error("pole within {dist:.2e} of the real axis at r = {location}; quadrature path invalid")]
    NearSingular { dist: f64, location: String },

    /// Estimated memory exceeds the configured budget.
    #[error("memory budget exceeded: estimated {estimate_mb} MB > budget {budget_mb} MB")]
    MemoryBudget { estimate_mb: usize, budget_mb: usize },

    /// Incompatible array shapes.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Usage / interface-contract error (CLI exit code 2).
    #[error("usage error: {0}")]
    Usage(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(field: &str, reason: impl Into<String>) -> Self {
        Error::Validation { field: field.to_string(), reason: reason.into() }
    }
}
