use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of a physical formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration violates its own invariants (e.g. Ewald truncation error).
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or inconsistent input data.
    #[error("input error: {0}")]
    Input(String),

    /// A parse failure at a specific (1-based) line of a text file.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// The operation refuses to run at this size.
    #[error("refused: {0}")]
    Refused(String),

    /// A statistic with zero variance cannot be normalized.
    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain(_) | Error::Config(_) | Error::Input(_) | Error::Parse { .. }
        )
    }
}
