//! Flat `key = value` configuration with command-line overrides.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are kept sorted
//! so the canonical text (and therefore the config hash) is stable.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse_str(text: &str, origin: &Path) -> Result<Self> {
        let mut kv = KvConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                msg: format!("line {}: expected key=value", n + 1),
            })?;
            kv.set(k.trim(), v.trim());
        }
        Ok(kv)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text, path)
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("override `{spec}` is not key=value")))?;
        self.set(k.trim(), v.trim());
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .get(key)
            .ok_or_else(|| Error::InvalidConfig(format!("missing key `{key}`")))?;
        raw.parse()
            .map_err(|_| Error::InvalidConfig(format!("bad value `{raw}` for `{key}`")))
    }

    /// Keeps only the keys accepted by `keep`, returning the rest.
    pub fn partition(&self, keep: impl Fn(&str) -> bool) -> (KvConfig, KvConfig) {
        let mut a = KvConfig::default();
        let mut b = KvConfig::default();
        for (k, v) in self.iter() {
            if keep(k) {
                a.set(k, v);
            } else {
                b.set(k, v);
            }
        }
        (a, b)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            s.push_str(k);
            s.push('=');
            s.push_str(v);
            s.push('\n');
        }
        s
    }

    pub fn as_map(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn from_map(entries: BTreeMap<String, String>) -> Self {
        Self { entries }
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_override() {
        let mut kv = KvConfig::parse_str("# c\n epochs = 30\n\nlr=0.001\n", Path::new("x")).unwrap();
        assert_eq!(kv.parse::<usize>("epochs").unwrap(), 30);
        kv.apply_override("lr=0.01").unwrap();
        assert_eq!(kv.parse::<f64>("lr").unwrap(), 0.01);
        assert_eq!(kv.to_text(), "epochs=30\nlr=0.01\n");
        assert!(KvConfig::parse_str("nonsense", Path::new("x")).is_err());
        assert!(kv.apply_override("novalue").is_err());
        assert!(kv.parse::<usize>("lr").is_err());
    }

    #[test]
    fn hash_is_order_independent() {
        let a = KvConfig::parse_str("a=1\nb=2", Path::new("x")).unwrap();
        let b = KvConfig::parse_str("b=2\na=1", Path::new("x")).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
