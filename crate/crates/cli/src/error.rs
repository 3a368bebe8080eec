use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config entries or option values.
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    /// Malformed input files.
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Core(#[from] chtf::Error),
}

impl CliError {
    /// Process exit code: 1 usage, 2 IO, 3 format or shape, 4 numeric or rank.
    pub fn exit_code(&self) -> i32 {
        use chtf::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Io { .. } => 2,
            CliError::Format(_) => 3,
            CliError::Core(e) => match e {
                E::Io(_) => 2,
                E::Format(_) | E::Shape(_) | E::InvalidTensor(_) | E::Json(_) | E::ModeOutOfRange { .. } => 3,
                E::RankOutOfRange { .. } | E::SvdFailed { .. } | E::Numeric(_) => 4,
                E::InvalidArgument(_) => 1,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Wraps a core error with the file it came from, keeping its category.
pub fn at_path(path: &Path, e: chtf::Error) -> CliError {
    match e {
        chtf::Error::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        chtf::Error::Format(m) => CliError::Format(format!("{}: {m}", path.display())),
        other => CliError::Core(other),
    }
}

pub fn csv_err(path: &Path, e: csv::Error) -> CliError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(source) => CliError::Io {
                path: path.to_path_buf(),
                source,
            },
            _ => unreachable!("checked io kind"),
        }
    } else {
        CliError::Format(format!("{}: {e}", path.display()))
    }
}
