use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed pool file, config or flag.
    #[error("{0}")]
    Input(String),

    /// The rule refused the pool under the error policy.
    #[error("degenerate pool: {0}")]
    Degenerate(String),

    /// A theorem or classification verdict deviated from the expected one.
    #[error("{0}")]
    Mismatch(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Io { .. } => 1,
            CliError::Degenerate(_) => 2,
            CliError::Mismatch(_) => 3,
        }
    }
}

impl From<riskshare::Error> for CliError {
    fn from(e: riskshare::Error) -> Self {
        match e {
            riskshare::Error::DegeneratePool { rule, condition } => {
                CliError::Degenerate(format!("{rule} is undefined when {condition}"))
            }
            other => CliError::Input(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
