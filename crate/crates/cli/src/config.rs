//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};

/// A mistake in how the tool was invoked; exits with the usage code.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(UsageError(msg.into()).into())
}

/// Ordered key/value settings restricted to a fixed key set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    allowed: Vec<&'static str>,
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn new(allowed: &[&'static str]) -> Self {
        RunConfig {
            allowed: allowed.to_vec(),
            values: BTreeMap::new(),
        }
    }

    pub fn parse(text: &str, allowed: &[&'static str]) -> Result<Self> {
        let mut cfg = RunConfig::new(allowed);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return usage(format!("config line {}: expected key = value", i + 1));
            };
            let k = k.trim();
            if cfg.values.contains_key(k) {
                return usage(format!("config line {}: duplicate key '{k}'", i + 1));
            }
            cfg.set(k, v.trim()).with_context(|| format!("config line {}", i + 1))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path, allowed: &[&'static str]) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text, allowed).with_context(|| format!("in {}", path.display()))
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !self.allowed.contains(&key) {
            return usage(format!("unknown key '{key}' (known: {})", self.allowed.join(", ")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Apply a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        match pair.split_once('=') {
            Some((k, v)) => self.set(k.trim(), v.trim()),
            None => usage(format!("override '{pair}' is not key=value")),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| UsageError(format!("{key} = {v}: {e}")).into()),
        }
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}

/// A resolved configuration echo, written in the given key order.
pub fn write_resolved(path: &Path, entries: &[(&str, String)]) -> Result<()> {
    let text: String = entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Parse `HxW`.
pub fn parse_res(s: &str) -> Result<(usize, usize)> {
    let parsed = s
        .split_once(['x', 'X'])
        .and_then(|(h, w)| Some((h.trim().parse().ok()?, w.trim().parse().ok()?)));
    match parsed {
        Some(r) => Ok(r),
        None => usage(format!("resolution '{s}' is not HxW")),
    }
}

pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|e| UsageError(format!("'{p}': {e}")).into()))
        .collect()
}
