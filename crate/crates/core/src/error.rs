use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate kernel: normalizer {normalizer:e} is below the numerical floor")]
    DegenerateKernel { normalizer: f64 },

    #[error("gram matrix is ill-conditioned: factorization failed with jitter up to {jitter:e}")]
    IllConditioned { jitter: f64 },

    #[error("hyperparameter optimization failed: every candidate fit was ill-conditioned")]
    OptimizationFailed,

    #[error("oracle limited to {max} features, got {got}")]
    OracleTooLarge { max: usize, got: usize },

    #[error("quadrature did not converge (best estimate {estimate}, error bound {error:e})")]
    QuadratureFailed { estimate: f64, error: f64 },

    #[error("explanation covariance cannot be factorized")]
    ExplanationDegenerate,

    #[error("ingestion error at row {row}, column {column}: {message}")]
    Ingestion {
        row: usize,
        column: String,
        message: String,
    },

    #[error("model format mismatch: expected {expected}, found {found}")]
    FormatMismatch { expected: String, found: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the numerics rather than by the input data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateKernel { .. }
                | Error::IllConditioned { .. }
                | Error::OptimizationFailed
                | Error::QuadratureFailed { .. }
                | Error::ExplanationDegenerate
        )
    }
}
