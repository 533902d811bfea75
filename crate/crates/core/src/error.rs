use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: {message}")]
    Validation { line: usize, message: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("injection density too high: could not place episode {episode} without overlap after {retries} retries")]
    InjectionDensity { episode: usize, retries: usize },

    #[error("{0}")]
    Shape(String),

    #[error("SCL requires labeled anomalies: {0}")]
    NoPositives(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: {diagnostics}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        diagnostics: String,
    },

    #[error("model is frozen (parameter hash {0})")]
    Frozen(String),

    #[error("one-class SVM did not converge after {iterations} iterations (KKT residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("detector fit received {0} positive-labeled latents")]
    PositiveInFit(usize),

    #[error("metric undefined: {0}")]
    Undefined(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
