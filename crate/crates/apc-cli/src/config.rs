//! Key-value run configuration.
//!
//! Settings come from an optional UTF-8 config file of `key = value` lines
//! (`#` starts a comment) overlaid with `--set key=value` flags. Commands
//! read each key through a typed getter that records the effective value,
//! defaults included; [`Settings::finish`] then rejects any key that no
//! getter consumed, and hashes the canonical effective configuration so
//! reports and checkpoints can name the exact settings that produced them.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Output-root override: when set, relative output paths land under it.
pub const OUT_ROOT_ENV: &str = "APC_OUT_ROOT";

#[derive(Debug)]
pub struct Settings {
    pending: BTreeMap<String, String>,
    effective: BTreeMap<String, String>,
}

/// Canonical form and hash of a fully consumed configuration.
#[derive(Debug, Clone)]
pub struct FrozenConfig {
    pub canonical: String,
    pub hash: String,
}

fn parse_lines(text: &str, origin: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Parse(format!("{origin} line {}: expected key = value", i + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(CliError::Parse(format!("{origin} line {}: empty key", i + 1)));
        }
        if map.insert(key.to_string(), value.to_string()).is_some() {
            return Err(CliError::Parse(format!(
                "{origin} line {}: duplicate key {key}",
                i + 1
            )));
        }
    }
    Ok(map)
}

impl Settings {
    /// Loads the file (if given), then applies `--set` overrides on top.
    pub fn load(path: Option<&Path>, sets: &[String]) -> Result<Self> {
        let mut pending = match path {
            Some(p) => {
                let text =
                    std::fs::read_to_string(p).map_err(|e| CliError::from_io(p, e))?;
                parse_lines(&text, &p.display().to_string())?
            }
            None => BTreeMap::new(),
        };
        for s in sets {
            let (key, value) = s.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("--set {s}: expected key=value"))
            })?;
            pending.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { pending, effective: BTreeMap::new() })
    }

    pub fn from_sets(sets: &[String]) -> Result<Self> {
        Self::load(None, sets)
    }

    /// Reads `key`, falling back to `default`; the value actually used is
    /// recorded for the canonical config.
    pub fn get<T>(&mut self, key: &str, default: T) -> Result<T>
    where
        T: FromStr + Display,
    {
        let value = match self.pending.remove(key) {
            Some(raw) => raw.parse::<T>().map_err(|_| {
                CliError::Config(format!("config key {key}: cannot parse {raw:?}"))
            })?,
            None => default,
        };
        self.effective.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    /// Like [`Settings::get`] but validates against a closed set of names.
    pub fn get_choice(&mut self, key: &str, default: &str, allowed: &[&str]) -> Result<String> {
        let value = self.get::<String>(key, default.to_string())?;
        if !allowed.contains(&value.as_str()) {
            return Err(CliError::Config(format!(
                "config key {key}: {value:?} is not one of {allowed:?}"
            )));
        }
        Ok(value)
    }

    /// Rejects unread keys and freezes the effective configuration.
    pub fn finish(self) -> Result<FrozenConfig> {
        if !self.pending.is_empty() {
            let keys: Vec<&str> = self.pending.keys().map(String::as_str).collect();
            return Err(CliError::Config(format!(
                "unknown config keys: {}",
                keys.join(", ")
            )));
        }
        Ok(freeze(&self.effective))
    }
}

/// Canonicalizes and hashes a set of effective key-value settings.
pub fn freeze(effective: &BTreeMap<String, String>) -> FrozenConfig {
    let mut canonical = String::new();
    for (k, v) in effective {
        canonical.push_str(k);
        canonical.push_str(" = ");
        canonical.push_str(v);
        canonical.push('\n');
    }
    let digest = Sha256::digest(canonical.as_bytes());
    let mut hash = String::with_capacity(16);
    for byte in digest.iter().take(8) {
        hash.push_str(&format!("{byte:02x}"));
    }
    FrozenConfig { canonical, hash }
}

/// Applies the `APC_OUT_ROOT` override to relative output paths.
pub fn resolve_out(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) if path.is_relative() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}
