use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("potential evaluation produced a non-finite value at x = {x}")]
    Evaluation { x: f64 },

    #[error("failed to parse potential expression `{input}`: {reason}")]
    Parse { input: String, reason: String },

    #[error("branch condition |arg(V - lambda)| < pi violated at x = {x}")]
    Branch { x: f64 },

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("ambiguous normalizability: fitted log-slope {slope:.6e} vs branch rate {rate:.6e}")]
    Classification { slope: f64, rate: f64 },

    #[error("singular factor: kernel function or Wronskian vanishes near x = {x} ({what})")]
    SingularFactor { x: f64, what: String },

    #[error("spectrum error: {0}")]
    Spectrum(String),

    #[error("ordering precondition violated: {0}")]
    Ordering(String),

    #[error("canonical basis violates ladder monotonicity: {0}")]
    BasisOrder(String),

    #[error("infeasible ordering: {0}")]
    InfeasibleOrdering(String),

    #[error("audit failed: {0}")]
    Audit(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } | Error::Domain(_) => 2,
            Error::Io(_) | Error::Json(_) => 1,
            _ => 3,
        }
    }

    /// Grid location associated with a numeric failure, if any.
    pub fn witness(&self) -> Option<f64> {
        match self {
            Error::Evaluation { x } | Error::Branch { x } | Error::SingularFactor { x, .. } => {
                Some(*x)
            }
            _ => None,
        }
    }
}
