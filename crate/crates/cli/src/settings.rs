//! Effective run settings: a config file overlaid with command-line flags.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Default)]
pub struct Settings {
    map: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(config: Option<&Path>) -> Result<Self> {
        let Some(path) = config else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let map = bregdiag::sim::parse_kv(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(Self { map })
    }

    pub fn from_map(map: BTreeMap<String, String>) -> Self {
        Self { map }
    }

    /// Sets `key` when a flag was given; flags override the config file.
    pub fn flag<T: ToString>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.map.insert(key.to_string(), v.to_string());
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.map.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .with_context(|| format!("missing required setting `{key}`"))
    }

    pub fn parse_or<T>(&self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .trim()
                .parse()
                .map_err(|e| anyhow::anyhow!("setting `{key}`: cannot parse `{v}`: {e}")),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key).map(str::trim) {
            None => Ok(default),
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") => Ok(false),
            Some(other) => bail!("setting `{key}`: expected true or false, got `{other}`"),
        }
    }

    pub fn check_known(&self, allowed: &[&str]) -> Result<()> {
        for k in self.map.keys() {
            if !allowed.contains(&k.as_str()) {
                bail!("unknown setting `{k}`; valid settings are {}", allowed.join(", "));
            }
        }
        Ok(())
    }

    pub fn map(&self) -> &BTreeMap<String, String> {
        &self.map
    }

    /// SHA-256 over the sorted `key=value` lines.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.map {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_ignores_insertion_order() {
        let mut a = Settings::default();
        a.set("model", "logistic");
        a.set("seed", 3);
        let mut b = Settings::default();
        b.set("seed", 3);
        b.set("model", "logistic");
        assert_eq!(a.digest(), b.digest());
        b.set("seed", 4);
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn flags_override() {
        let mut s = Settings::default();
        s.set("chains", 4);
        s.flag("chains", Some(2));
        s.flag::<u32>("warmup", None);
        assert_eq!(s.get("chains"), Some("2"));
        assert!(s.get("warmup").is_none());
        assert_eq!(s.parse_or("chains", 0usize).unwrap(), 2);
        assert!(s.parse_or::<usize>("missing", 7).unwrap() == 7);
        s.set("chains", "two");
        assert!(s.parse_or("chains", 0usize).is_err());
        assert!(s.check_known(&["chains"]).is_ok());
        assert!(s.check_known(&["seed"]).is_err());
    }
}
