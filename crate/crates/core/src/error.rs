use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("infeasible parameters: {0}")]
    InfeasibleParameters(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty sample: {0}")]
    EmptySample(&'static str),

    #[error("zero denominator: {0}")]
    ZeroDenominator(&'static str),

    #[error("integration did not converge on [{lo}, {hi}]")]
    NonConvergentIntegration { lo: f64, hi: f64 },

    #[error("no root in bracket [{lo}, {hi}]: {reason}")]
    NoRootInBracket { lo: f64, hi: f64, reason: String },

    #[error("privacy amplification target of {target} bits exceeds the {available} available")]
    TargetTooLong { target: usize, available: usize },

    #[error("classical channel: {0}")]
    Channel(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("scenario line {line}: {message}")]
    Scenario { line: usize, message: String },

    #[error("scenario is missing required keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),

    #[error("unknown sweep parameter `{0}`")]
    UnknownParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable tag for the CLI's error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InfeasibleParameters(_) => "infeasible-parameters",
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::EmptySample(_) => "empty-sample",
            Error::ZeroDenominator(_) => "zero-denominator",
            Error::NonConvergentIntegration { .. } => "non-convergent-integration",
            Error::NoRootInBracket { .. } => "no-root-in-bracket",
            Error::TargetTooLong { .. } => "target-too-long",
            Error::Channel(_) => "channel-failure",
            Error::Protocol(_) => "protocol-violation",
            Error::Scenario { .. } => "scenario",
            Error::MissingKeys(_) => "missing-keys",
            Error::UnknownParameter(_) => "unknown-parameter",
            Error::Io(_) => "io",
        }
    }
}
