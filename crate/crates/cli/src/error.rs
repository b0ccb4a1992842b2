use clusterobs_core::Error as CoreError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_ASSUMPTIONS: i32 = 2;
pub const EXIT_NOT_STABILIZABLE: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("assumptions violated: {0}")]
    Assumptions(String),
    #[error("not stabilizable: {0}")]
    NotStabilizable(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Other(_) => EXIT_USAGE,
            CliError::Assumptions(_) => EXIT_ASSUMPTIONS,
            CliError::NotStabilizable(_) => EXIT_NOT_STABILIZABLE,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::RankDeficient { .. } | CoreError::NotConnected => CliError::Assumptions(e.to_string()),
            CoreError::NotStabilizable(_)
            | CoreError::TooFewNeighbors { .. }
            | CoreError::UnboundedDescent { .. }
            | CoreError::UnstableErrorDynamics { .. } => CliError::NotStabilizable(e.to_string()),
            CoreError::InvalidArgument(_)
            | CoreError::Dimension(_)
            | CoreError::Partition(_)
            | CoreError::Clustering(_)
            | CoreError::NodeOutOfRange { .. } => CliError::Usage(e.to_string()),
            other => CliError::Other(anyhow::Error::new(other)),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.into())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
