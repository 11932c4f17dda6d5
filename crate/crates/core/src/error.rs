use thiserror::Error;

pub type Result<T> = std::result::Result<T, VolterraError>;

#[derive(Debug, Error)]
pub enum VolterraError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("dense construction needs {required} regressor columns, limit is {limit}")]
    SizeExceeded { required: usize, limit: usize },

    #[error("input of length {len} is too short for memory length {memory}")]
    InsufficientData { len: usize, memory: usize },

    #[error("separation identity violated at t={t}, b={b} (residual {residual:e})")]
    SeparationCheckFailed { t: usize, b: usize, residual: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("all {restarts} optimizer restarts failed to produce a finite cost")]
    AllRestartsFailed { restarts: usize },

    #[error("estimated first-order map is numerically zero")]
    DegenerateFirstOrder,

    #[error("static nonlinearity is not a polynomial")]
    NonPolynomial,

    #[error("output signal has zero variance")]
    ZeroSignal,

    #[error("rejection sampling gave up after {attempts} attempts")]
    ConstraintUnsatisfiable { attempts: usize },

    #[error("reference signal is constant")]
    DegenerateReference,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl VolterraError {
    /// True for failures that come from the numerics rather than from bad input or IO.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            VolterraError::NotPositiveDefinite
                | VolterraError::NonFinite(_)
                | VolterraError::AllRestartsFailed { .. }
                | VolterraError::DegenerateFirstOrder
                | VolterraError::SeparationCheckFailed { .. }
                | VolterraError::ConstraintUnsatisfiable { .. }
                | VolterraError::DegenerateReference
                | VolterraError::ZeroSignal
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(
            self,
            VolterraError::Io(_) | VolterraError::Json(_) | VolterraError::Csv(_)
        )
    }
}
