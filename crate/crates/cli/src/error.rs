use basket_cds::CdsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration at `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("could not parse configuration: {0}")]
    Parse(#[from] toml::de::Error),

    #[error("{context}: {source}")]
    Engine {
        context: String,
        #[source]
        source: CdsError,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn engine(context: impl Into<String>, source: CdsError) -> Self {
        Self::Engine {
            context: context.into(),
            source,
        }
    }

    /// 2 for bad input, 3 for engine failures, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } | Self::Parse(_) => 2,
            Self::Engine { .. } => 3,
            Self::Io { .. } | Self::Csv(_) => 4,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
