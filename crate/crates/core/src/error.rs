use thiserror::Error;

/// Errors raised by the kernel feature pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("metric component {index} is not finite ({value})")]
    NonFiniteMetric { index: usize, value: f64 },
    #[error("reference scale {index} must be positive, got {value}")]
    InvalidScale { index: usize, value: f64 },
    #[error("feature map needs at least one sample")]
    EmptyFeatureMap,
    #[error("kernel bandwidth must be positive, got {0}")]
    InvalidBandwidth(f64),
    #[error("decay factor must lie in [0, 1], got {0}")]
    InvalidDecay(f64),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("no history: the KEA vector has not absorbed a sample yet")]
    NoHistory,
}

/// A scenario or command-line configuration problem.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("could not generate a connected topology in {attempts} attempts ({detail})")]
    Connectivity { attempts: u32, detail: String },
    #[error("{0}")]
    Other(String),
}

impl ConfigError {
    pub fn invalid(key: &str, reason: impl Into<String>) -> Self {
        ConfigError::InvalidValue {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}

/// Top-level error type for runs, logs and experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed run log at line {line}: {reason}")]
    Log { line: usize, reason: String },
    #[error("empty measurement window [{start}, {end})")]
    EmptyWindow { start: f64, end: f64 },
    #[error("scenario `{scenario}` failed: {source}")]
    Scenario {
        scenario: String,
        #[source]
        source: Box<Error>,
    },
}
