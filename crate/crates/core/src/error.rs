use thiserror::Error;

/// Errors raised across the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("N = {n} is below the smallest admissible value {min} for this family")]
    DegreeTooSmall { n: usize, min: usize },

    #[error("complex eigencharges detected: {found} of {dim} charges real, max |Im F| = {max_imag:e}")]
    ComplexChargesDetected { found: usize, dim: usize, max_imag: f64 },

    #[error("branch index {branch} out of range ({available} real charges)")]
    BranchOutOfRange { branch: usize, available: usize },

    #[error("elimination formula undefined at F = 0")]
    DivisionByZeroCharge,

    #[error("negative radicand {0:e} in the L = 5 elimination formula")]
    NegativeRadicand(f64),

    #[error("determinant route limited to N <= {max}, got N = {n}")]
    DeterminantRouteRange { n: usize, max: usize },

    #[error("quadrature not converged: node doubling changed the result by {delta:e} (relative)")]
    QuadratureNotConverged { delta: f64 },

    #[error("singular overlap: {0}")]
    SingularOverlap(String),

    #[error("shooting not converged: step-halving disagreement {disagreement:e}")]
    NonConvergent { disagreement: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
