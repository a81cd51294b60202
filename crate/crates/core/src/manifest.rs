//! Plain-text `key=value` sidecar files (model manifests, run manifests,
//! `--config` files).

use std::fmt::Display;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Ordered `key=value` entries. Blank lines and lines starting with `#` are
/// ignored when parsing.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets `key`, replacing an earlier value in place.
    pub fn set(&mut self, key: impl Into<String>, value: impl Display) -> &mut Self {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key, value)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Parses the value of `key` with `FromStr`.
    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .get(key)
            .ok_or_else(|| Error::format(format!("manifest lacks `{key}`")))?;
        raw.parse()
            .map_err(|_| Error::format(format!("manifest value `{key}={raw}` is malformed")))
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn extend<K: Into<String>, V: Display>(&mut self, kv: impl IntoIterator<Item = (K, V)>) {
        for (k, v) in kv {
            self.set(k, v);
        }
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut m = Manifest::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(format!("line {}: expected key=value", n + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::format(format!("line {}: empty key", n + 1)));
            }
            m.set(k, v.trim());
        }
        Ok(m)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_str(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_string())?;
        Ok(())
    }
}

impl std::fmt::Display for Manifest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}
