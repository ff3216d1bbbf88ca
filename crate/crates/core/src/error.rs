use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unit mismatch: {op} on {lhs} and {rhs}")]
    Unit {
        op: &'static str,
        lhs: &'static str,
        rhs: &'static str,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid subsystem selection: {0}")]
    Subsystem(String),

    #[error("state space of {0} amplitudes exceeds the dense-representation cap")]
    TooLarge(usize),

    #[error("operator is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("every amplitude rounded to zero at mu = {0}; state cannot be renormalized")]
    QuantizedToZero(u32),

    #[error("numerical watchdog: {0}")]
    Watchdog(String),

    #[error("step bound violated: dt = {dt:.3e} exceeds stable limit {limit:.3e}")]
    StepBound { dt: f64, limit: f64 },

    #[error("no admissible transition basis among the candidates")]
    EmptyCandidates,

    #[error("system is computationally stable; transition refused (pass force to override)")]
    StableRefusal,

    #[error("undersampled outcome {index}: expected count {expected:.2} < 5")]
    Undersampled { index: usize, expected: f64 },

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema(_) | Error::Json(_) => 2,
            Error::Watchdog(_) | Error::StepBound { .. } => 3,
            _ => 1,
        }
    }
}
