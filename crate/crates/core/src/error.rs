use thiserror::Error;

/// Which ergodicity precondition a transition matrix violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErgodicityFailure {
    Irreducibility,
    Aperiodicity,
}

impl std::fmt::Display for ErgodicityFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ErgodicityFailure::Irreducibility => write!(f, "irreducibility"),
            ErgodicityFailure::Aperiodicity => write!(f, "aperiodicity"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("construction error: {0}")]
    Construction(String),

    #[error("ergodicity error ({kind}): {detail}")]
    Ergodicity {
        kind: ErgodicityFailure,
        detail: String,
    },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("moment order {0} is not supported (orders 1..=4 only)")]
    UnsupportedOrder(u32),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("time {t} lies outside the simulated horizon {horizon}")]
    OutOfHorizon { t: f64, horizon: f64 },

    #[error("time {t} exceeds the configured horizon {horizon}")]
    HorizonExceeded { t: f64, horizon: f64 },

    #[error(
        "Monte Carlo budget too small for {what}: half-width {half_width:.3e} vs scale {scale:.3e}"
    )]
    BudgetTooSmall {
        what: String,
        half_width: f64,
        scale: f64,
    },

    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),

    #[error("negative variance integral {value:.3e} over [{s}, {t}]")]
    NegativeVarianceIntegral { value: f64, s: f64, t: f64 },

    #[error("centering violation: |Pi rhs| = {defect:.3e} exceeds {limit:.3e}")]
    CenteringViolation { defect: f64, limit: f64 },

    #[error("instability detected: stepped norm {norm:.6e} exceeds bound {bound:.6e}")]
    InstabilityDetected { norm: f64, bound: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
