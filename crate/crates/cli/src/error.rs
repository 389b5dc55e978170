use std::path::PathBuf;

use thiserror::Error;

/// Failures surfaced by the command-line tool, each mapped to an exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] polysdf::Error),
}

impl CliError {
    /// 1 usage/config, 2 I/O and file format, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        use polysdf::Error as E;
        match self {
            CliError::Config(_) => 1,
            CliError::Io { .. } => 2,
            CliError::Core(e) => match e {
                E::InvalidConfig(_) | E::OutOfDomain { .. } | E::DimensionMismatch { .. } | E::InvalidArgument(_) => 1,
                E::Io { .. } | E::Parse { .. } | E::UnsupportedFormat(_) => 2,
                E::Numerical(_) | E::VanishingGradient(_) => 3,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 1);
        assert_eq!(CliError::Core(polysdf::Error::UnsupportedFormat("x".into())).exit_code(), 2);
        assert_eq!(CliError::Core(polysdf::Error::Numerical("x".into())).exit_code(), 3);
        assert_eq!(CliError::Core(polysdf::Error::VanishingGradient(0.0)).exit_code(), 3);
        let io = std::io::Error::other("x");
        assert_eq!(CliError::Io { path: "a".into(), source: io }.exit_code(), 2);
    }
}
