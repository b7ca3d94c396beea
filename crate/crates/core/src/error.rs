use thiserror::Error;

/// Every failure the toolkit can report.
///
/// `kind()` gives a stable machine-readable tag; the CLI and the C ABI both
/// key off it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is not symmetric within tolerance (max asymmetry {asymmetry:.3e})")]
    Shape { asymmetry: f64 },
    #[error("matrix is singular to working precision (pivot {pivot:.3e})")]
    Singular { pivot: f64 },
    #[error("iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },
    #[error("matrix is not stable: spectral radius {rho}")]
    Stability { rho: f64 },
    #[error("system is not stabilizable: {0}")]
    Stabilizability(String),
    #[error("system is not detectable: {0}")]
    Detectability(String),
    #[error("system is not controllable over the requested horizon (nu = {nu:.3e})")]
    Controllability { nu: f64 },
    #[error("argument outside the valid domain: {0}")]
    Domain(String),
    #[error("state diverged at step {step}")]
    Divergence { step: usize },
    #[error("regression failed: {0}")]
    Fit(String),
    #[error("invalid cost matrices: {0}")]
    Cost(String),
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::NonFinite { .. } => "non_finite",
            Error::Shape { .. } => "shape",
            Error::Singular { .. } => "singularity",
            Error::Convergence { .. } => "convergence",
            Error::Stability { .. } => "stability",
            Error::Stabilizability(_) => "stabilizability",
            Error::Detectability(_) => "detectability",
            Error::Controllability { .. } => "controllability",
            Error::Domain(_) => "domain",
            Error::Divergence { .. } => "divergence",
            Error::Fit(_) => "fit",
            Error::Cost(_) => "cost",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
