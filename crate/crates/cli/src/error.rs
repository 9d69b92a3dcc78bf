use qec_core::QecError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("learning diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    /// A library error raised while running a validated config.
    #[error("run failed: {0}")]
    Run(QecError),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Run(_) => 2,
            CliError::Divergence { .. } => 3,
            CliError::Io { .. } => 4,
        }
    }
}

impl From<QecError> for CliError {
    fn from(e: QecError) -> Self {
        match e {
            QecError::Divergence { iteration } => CliError::Divergence { iteration },
            other => CliError::Run(other),
        }
    }
}
