use std::path::{Path, PathBuf};

use thiserror::Error;

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_CHECKS: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("{}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{failed} of {total} checks failed")]
    ChecksFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_owned(),
            source,
        }
    }
}

fn library_code(e: &clm::Error) -> i32 {
    match e {
        clm::Error::Io(_) => EXIT_IO,
        clm::Error::InvalidConfig(_) | clm::Error::VocabMismatch { .. } => EXIT_CONFIG,
        clm::Error::AtSentence { source, .. } => library_code(source),
        e if e.is_numeric() => EXIT_NUMERIC,
        _ => EXIT_OTHER,
    }
}

/// Maps the first recognised error in the chain to a process exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return match e {
                CliError::Config(_) => EXIT_CONFIG,
                CliError::Io { .. } => EXIT_IO,
                CliError::ChecksFailed { .. } => EXIT_CHECKS,
            };
        }
        if let Some(e) = cause.downcast_ref::<clm::Error>() {
            return library_code(e);
        }
    }
    EXIT_OTHER
}
