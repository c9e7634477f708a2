use std::path::{Path, PathBuf};

use kdvbs_core::Error as CoreError;
use thiserror::Error;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MATH: i32 = 3;
pub const EXIT_BLOWUP: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(CoreError::Blowup { .. }) => EXIT_BLOWUP,
            CliError::Core(_) => EXIT_MATH,
            CliError::Io { .. } => EXIT_IO,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_distinct_per_failure_class() {
        let blowup = CliError::Core(CoreError::Blowup { time: 1.0, energy: 1e9, limit: 1e6 });
        let stuck = CliError::Core(CoreError::NoConvergence { what: "x".into(), iterations: 3 });
        let io = CliError::io(Path::new("/nope"), std::io::Error::other("denied"));
        let usage = CliError::Usage("bad".into());
        let codes = [usage.exit_code(), stuck.exit_code(), blowup.exit_code(), io.exit_code()];
        assert_eq!(codes, [EXIT_USAGE, EXIT_MATH, EXIT_BLOWUP, EXIT_IO]);
        assert_eq!(CliError::Core(CoreError::Singular(2)).exit_code(), EXIT_MATH);
    }
}
