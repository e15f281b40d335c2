//! Error type mapping failures onto process exit codes.

use std::fmt;

use evolved_sampling::Error;

#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config keys or input files. Exit 2.
    Usage(String),
    /// Non-finite values or divergence during a run. Exit 3.
    Numeric(String),
    /// Filesystem trouble. Exit 1.
    Io(String),
}

impl Failure {
    /// Classifies a library error, prefixing the config key it came from.
    pub fn from_lib(key: &str, e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::Format(_) => Failure::Usage(format!("{key}: {e}")),
            Error::Numeric(_) | Error::Diverged { .. } => Failure::Numeric(format!("{key}: {e}")),
            Error::Io(_) => Failure::Io(format!("{key}: {e}")),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Numeric(_) => 3,
            Failure::Io(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Numeric(m) | Failure::Io(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for Failure {}

pub fn io_err(what: impl fmt::Display) -> impl FnOnce(std::io::Error) -> Failure {
    move |e| Failure::Io(format!("{what}: {e}"))
}
