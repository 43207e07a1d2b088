use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: residual {residual:.3e} exceeds {threshold:.3e}")]
    NonHermitian { residual: f64, threshold: f64 },

    #[error("Hamiltonian is not Hermitian: residual {residual:.3e}")]
    NonHermitianHamiltonian { residual: f64 },

    #[error("eigenvalue iteration did not converge (dim {dim})")]
    ConvergenceFailure { dim: usize },

    #[error("matrix is not positive definite: min eigenvalue {min_eigenvalue:.6e} <= floor {floor}")]
    NotPositiveDefinite { min_eigenvalue: f64, floor: f64 },

    #[error("matrix exponential overflowed")]
    Overflow,

    #[error("singular matrix: pivot {pivot:.3e} at column {column}")]
    Singular { pivot: f64, column: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("dimension {dim} exceeds the oracle limit {max}")]
    DimTooLarge { dim: usize, max: usize },

    #[error("entries must be finite and number dim^2")]
    InvalidEntries,

    #[error("Fock truncation too small: retained mass {retained:.6} < 0.99")]
    LeakageTooLarge { retained: f64 },

    #[error("trace of the unnormalized state underflowed: {trace:.3e}")]
    DegenerateTrace { trace: f64 },

    #[error("not a density matrix: {0}")]
    InvalidState(String),

    #[error("step size underflow at t = {t}: dt = {dt:.3e}")]
    StepUnderflow { t: f64, dt: f64 },

    #[error("maximum number of steps ({max_steps}) exceeded at t = {t}")]
    MaxStepsExceeded { max_steps: usize, t: f64 },

    #[error("reference trajectory has no sample at t = {time}")]
    GridMismatch { time: f64 },

    #[error("need at least {needed} points inside the error window, found {found}")]
    InsufficientPoints { found: usize, needed: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bad config: {0}")]
    BadConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
