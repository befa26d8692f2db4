//! `key = value` configuration files mirroring the long flag names.
//! Flags always override file values; file values override built-in
//! defaults. Lines starting with `#` are comments.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Parsed configuration file contents.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config file {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Settings> {
        let mut values = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("line {}: expected `key = value`, found `{line}`", idx + 1);
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Settings { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Resolves a float setting: flag, then file, then default.
    pub fn f64(&self, flag: Option<f64>, key: &str, default: Option<f64>) -> Result<f64> {
        if let Some(v) = flag {
            return Ok(v);
        }
        if let Some(raw) = self.get(key) {
            return raw
                .parse::<f64>()
                .with_context(|| format!("config key `{key}`: invalid number `{raw}`"));
        }
        default.with_context(|| format!("missing required value `{key}` (flag or config)"))
    }

    /// Resolves a count setting; scientific notation is accepted as long
    /// as it denotes a nonnegative integer.
    pub fn count(&self, flag: Option<String>, key: &str, default: Option<u64>) -> Result<u64> {
        if let Some(raw) = flag {
            return parse_count(&raw).with_context(|| format!("flag --{key}"));
        }
        if let Some(raw) = self.get(key) {
            return parse_count(raw).with_context(|| format!("config key `{key}`"));
        }
        default.with_context(|| format!("missing required value `{key}` (flag or config)"))
    }

    pub fn u64_value(&self, flag: Option<u64>, key: &str, default: u64) -> Result<u64> {
        if let Some(v) = flag {
            return Ok(v);
        }
        if let Some(raw) = self.get(key) {
            return raw
                .parse::<u64>()
                .with_context(|| format!("config key `{key}`: invalid integer `{raw}`"));
        }
        Ok(default)
    }
}

/// Parses a pulse/round count, accepting plain integers and scientific
/// notation (`1e10`).
pub fn parse_count(raw: &str) -> Result<u64> {
    if let Ok(n) = raw.parse::<u64>() {
        return Ok(n);
    }
    let value: f64 = raw
        .parse()
        .with_context(|| format!("invalid count `{raw}`"))?;
    if !value.is_finite() || value < 0.0 || value > 1.8e19 {
        bail!("count `{raw}` out of range");
    }
    let rounded = value.round();
    if (value - rounded).abs() > 1e-6 * value.max(1.0) {
        bail!("count `{raw}` is not an integer");
    }
    Ok(rounded as u64)
}
