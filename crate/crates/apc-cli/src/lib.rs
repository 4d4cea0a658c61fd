//! File formats, audio frontend, and the command layer for the `apc`
//! binary. Everything numeric lives in `apc-core`; this crate adds the
//! parts that need an operating system: WAV decoding, binary feature and
//! checkpoint files, manifests, config parsing, and reports.
//!
//! All writes are atomic (temp file + rename) and all outputs are
//! deterministic under a fixed config and seed, so reruns are bitwise
//! reproducible except for the timestamped run log.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod frontend;

pub use error::{CliError, Result};
