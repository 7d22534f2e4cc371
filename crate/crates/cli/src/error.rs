//! Error type mapping failures onto the documented exit codes:
//! 1 usage, 2 input validation, 3 internal invariant.

use thiserror::Error;
use txhist_core::cluster::ClusterError;
use txhist_core::ingest::IngestError;
use txhist_core::learn::LearnError;
use txhist_core::summarize::SummarizeError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> CliError {
        CliError::Usage(msg.into())
    }

    pub fn input(msg: impl Into<String>) -> CliError {
        CliError::Input(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Input(e.to_string())
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> CliError {
        CliError::Input(e.to_string())
    }
}

impl From<ClusterError> for CliError {
    fn from(e: ClusterError) -> CliError {
        CliError::Input(e.to_string())
    }
}

impl From<SummarizeError> for CliError {
    fn from(e: SummarizeError) -> CliError {
        match e {
            // the pipeline sorts and validates before feeding the engine, so
            // these indicate a bug rather than bad input
            SummarizeError::UnsortedStream { .. } | SummarizeError::NonFinite(_) => {
                CliError::Internal(e.to_string())
            }
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> CliError {
        CliError::Input(e.to_string())
    }
}
