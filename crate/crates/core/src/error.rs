use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("{param} out of range: {value} not in [{min}, {max}]")]
    OutOfRange {
        param: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("invalid argument {param}: {reason}")]
    Argument { param: &'static str, reason: String },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("unknown label: {0}")]
    Lookup(String),
    #[error("root not bracketed in [{lo}, {hi}]")]
    RootNotBracketed { lo: f64, hi: f64 },
    #[error("grid under-resolved: step {step_s} s, required at most {required_s} s")]
    Resolution { step_s: f64, required_s: f64 },
    #[error("trace shape unsuitable: {0}")]
    Shape(String),
    #[error("SNR undefined: minimum coincidence count is zero; extend accumulation")]
    UndefinedSnr,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn argument(param: &'static str, reason: impl Into<String>) -> Self {
        Error::Argument {
            param,
            reason: reason.into(),
        }
    }
}
