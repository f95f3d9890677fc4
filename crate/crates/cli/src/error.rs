pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_INVALID: u8 = 4;
pub const EXIT_NUMERIC: u8 = 5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] sfconf::Error),

    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Outputs were written but a numerical check failed.
    #[error("{0}")]
    Numeric(String),
}

pub type CliResult<T = ()> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io { .. } => EXIT_IO,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::Core(e) => match e {
                sfconf::Error::File { .. } | sfconf::Error::Io(_) | sfconf::Error::Csv(_) => {
                    EXIT_IO
                }
                sfconf::Error::NonFiniteLoss { .. } | sfconf::Error::Diverged { .. } => {
                    EXIT_NUMERIC
                }
                _ => EXIT_INVALID,
            },
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<sfconf::io::TensorError> for CliError {
    fn from(e: sfconf::io::TensorError) -> Self {
        CliError::Core(e.into())
    }
}
