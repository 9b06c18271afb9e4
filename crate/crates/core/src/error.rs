use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("degenerate logits: variance {variance:e} is below 1e-24")]
    DegenerateLogits { variance: f64 },

    #[error("loss output must be scalar, got shape {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite objective value {value} at iteration {iteration}")]
    NonFinite { value: f64, iteration: usize },

    #[error("dense Hessian limited to {limit} parameters, model has {params}")]
    TooLarge { params: usize, limit: usize },

    #[error("power iteration did not converge after {iterations} iterations (last Rayleigh quotient {rayleigh})")]
    NoConvergence { iterations: usize, rayleigh: f64 },

    #[error("curvature regime is only evaluated for the l2 ball")]
    UnsupportedRegime,

    #[error("training diverged at step {step} (loss {loss:e})")]
    Divergence { step: usize, loss: f64 },

    #[error("not at a whitened global minimum: {0}")]
    NotAtMinimum(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
