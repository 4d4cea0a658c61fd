//! Error categories with stable exit codes.
//!
//! Every failure surfaces as one machine-parsable stderr line of the form
//! `error category=<category> message=<quoted>` plus a process exit code,
//! so batch drivers can dispatch on failures without scraping prose.

use std::io;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad command line (exit 2, matching clap's own convention).
    #[error("{0}")]
    Usage(String),
    /// A referenced input file or directory does not exist (exit 3).
    #[error("{0}")]
    MissingInput(String),
    /// Config or data fails a contract (exit 4).
    #[error("{0}")]
    Config(String),
    /// Shape or width mismatch between artifacts (exit 5).
    #[error("{0}")]
    Dimension(String),
    /// Malformed file contents (exit 6).
    #[error("{0}")]
    Parse(String),
    /// Non-finite values or optimizer-state corruption (exit 7).
    #[error("{0}")]
    Numeric(String),
    /// Any other IO failure (exit 1).
    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::MissingInput(_) => "missing_input",
            CliError::Config(_) => "config",
            CliError::Dimension(_) => "dimension",
            CliError::Parse(_) => "parse",
            CliError::Numeric(_) => "numeric",
            CliError::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) => 2,
            CliError::MissingInput(_) => 3,
            CliError::Config(_) => 4,
            CliError::Dimension(_) => 5,
            CliError::Parse(_) => 6,
            CliError::Numeric(_) => 7,
        }
    }

    /// Wraps an IO error, keeping the path in the message; NotFound gets
    /// its own category so drivers can distinguish absent inputs.
    pub fn from_io(path: &Path, e: io::Error) -> Self {
        let msg = format!("{}: {e}", path.display());
        if e.kind() == io::ErrorKind::NotFound {
            CliError::MissingInput(msg)
        } else {
            CliError::Io(msg)
        }
    }
}

impl From<apc_core::Error> for CliError {
    fn from(e: apc_core::Error) -> Self {
        use apc_core::Error as E;
        let msg = e.to_string();
        match e {
            E::Shape { .. } | E::Dimension { .. } | E::DataLength { .. } => {
                CliError::Dimension(msg)
            }
            E::NonFinite { .. } | E::OptimizerState { .. } => CliError::Numeric(msg),
            _ => CliError::Config(msg),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct_and_stable() {
        let errs = [
            CliError::Io(String::new()),
            CliError::Usage(String::new()),
            CliError::MissingInput(String::new()),
            CliError::Config(String::new()),
            CliError::Dimension(String::new()),
            CliError::Parse(String::new()),
            CliError::Numeric(String::new()),
        ];
        let codes: Vec<i32> = errs.iter().map(|e| e.exit_code()).collect();
        assert_eq!(codes, vec![1, 2, 3, 4, 5, 6, 7]);
        let mut cats: Vec<&str> = errs.iter().map(|e| e.category()).collect();
        cats.dedup();
        assert_eq!(cats.len(), errs.len());
    }

    #[test]
    fn core_errors_map_to_categories() {
        let shape = apc_core::Error::Shape { op: "x", expected: (1, 2), got: (3, 4) };
        assert_eq!(CliError::from(shape).category(), "dimension");
        let nan = apc_core::Error::NonFinite { context: String::from("loss") };
        assert_eq!(CliError::from(nan).category(), "numeric");
        let cfg = apc_core::Error::Config { message: String::from("bad") };
        assert_eq!(CliError::from(cfg).category(), "config");
    }

    #[test]
    fn missing_file_maps_to_missing_input() {
        let e = io::Error::new(io::ErrorKind::NotFound, "gone");
        assert_eq!(CliError::from_io(Path::new("x"), e).exit_code(), 3);
        let e = io::Error::new(io::ErrorKind::PermissionDenied, "no");
        assert_eq!(CliError::from_io(Path::new("x"), e).exit_code(), 1);
    }
}
