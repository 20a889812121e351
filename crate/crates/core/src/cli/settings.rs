//! Flat `key = value` settings with layered sources.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Every recognised key and its default (`None`: no default).
pub const KEYS: &[(&str, Option<&str>)] = &[
    // shared
    ("seed", Some("0")),
    ("workers", Some("0")),
    ("out", Some(".")),
    ("input", None),
    ("test", None),
    ("normalize", Some("true")),
    // policy and training
    ("policy", Some("waugment")),
    ("transforms", Some("ucr")),
    ("magnitude", Some("5")),
    ("alpha", Some("1")),
    ("freeze_weights", Some("false")),
    ("batch_size", Some("128")),
    ("lr", Some("0.001")),
    ("epochs", Some("200")),
    ("patience", Some("10")),
    ("plateau_patience", Some("50")),
    ("plateau_factor", Some("0.5")),
    ("hidden", Some("32")),
    ("val_fraction", Some("0.2")),
    ("checkpoint", None),
    // financial windows
    ("returns", None),
    ("window", Some("240")),
    ("split_len", Some("1000")),
    ("train_len", Some("750")),
    ("stride", Some("250")),
    // backtest
    ("predictions", None),
    ("k", Some("10")),
    ("cost_bps", Some("5")),
    // search
    ("policies", Some("none,waugment,alpha_trimmed,randaugment")),
    ("magnitudes", Some("1,5,10,15,20")),
    ("alphas", Some("1,2")),
    ("splits", Some("5")),
    ("subset_sizes", Some("")),
    ("subset_repetitions", Some("5")),
    // synth
    ("kind", Some("returns")),
    ("stocks", Some("50")),
    ("days", Some("2000")),
    ("samples", Some("400")),
    ("length", Some("64")),
    ("period", Some("16")),
    ("noise", Some("0.3")),
];

// keys that do not change results and are left out of the config hash
const UNHASHED: &[&str] = &["out", "workers", "checkpoint"];

#[derive(Debug, Clone, PartialEq)]
enum Origin {
    Default,
    File { path: PathBuf, line: usize },
    Flag,
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    origin: Origin,
}

#[derive(Debug, Clone)]
pub struct Settings {
    values: BTreeMap<String, Entry>,
}

impl Default for Settings {
    fn default() -> Self {
        let values = KEYS
            .iter()
            .filter_map(|(k, d)| d.map(|v| (k.to_string(), Entry { value: v.to_string(), origin: Origin::Default })))
            .collect();
        Self { values }
    }
}

fn config_err(key: &str, msg: impl Into<String>) -> Error {
    Error::Config { key: key.to_string(), msg: msg.into() }
}

impl Settings {
    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        self.load_str(&text, path)
    }

    pub fn load_str(&mut self, text: &str, path: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("expected `key = value`, found `{line}`"),
                });
            };
            let origin = Origin::File { path: path.to_path_buf(), line: i + 1 };
            self.insert(k.trim(), v.trim(), origin)?;
        }
        Ok(())
    }

    /// Apply a `key=value` override.
    pub fn assign(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| config_err(assignment, "override must look like key=value"))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        self.insert(key, &value.into(), Origin::Flag)
    }

    fn insert(&mut self, key: &str, value: &str, origin: Origin) -> Result<()> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            let msg = match &origin {
                Origin::File { path, line } => format!("unknown key ({}:{line})", path.display()),
                _ => "unknown key".to_string(),
            };
            return Err(config_err(key, msg));
        }
        self.values.insert(key.to_string(), Entry { value: value.to_string(), origin });
        Ok(())
    }

    /// Value of `key`; empty strings count as unset.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|e| e.value.as_str()).filter(|v| !v.is_empty())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| config_err(key, "required key is missing"))
    }

    fn where_(&self, key: &str) -> String {
        match self.values.get(key).map(|e| &e.origin) {
            Some(Origin::File { path, line }) => format!(" ({}:{line})", path.display()),
            Some(Origin::Flag) => " (command line)".into(),
            _ => String::new(),
        }
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        let raw = self.require(key)?;
        raw.parse::<T>()
            .map_err(|e| config_err(key, format!("cannot parse `{raw}`: {e}{}", self.where_(key))))
    }

    pub fn parse_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(_) => self.parse(key).map(Some),
        }
    }

    /// Comma-separated list; unset or empty gives an empty list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        let Some(raw) = self.get(key) else { return Ok(Vec::new()) };
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>()
                    .map_err(|e| config_err(key, format!("cannot parse `{s}`: {e}{}", self.where_(key))))
            })
            .collect()
    }

    pub fn path(&self, key: &str) -> Result<PathBuf> {
        let p = PathBuf::from(self.require(key)?);
        if !p.exists() {
            return Err(config_err(key, format!("{} does not exist{}", p.display(), self.where_(key))));
        }
        Ok(p)
    }

    pub fn path_opt(&self, key: &str) -> Result<Option<PathBuf>> {
        match self.get(key) {
            None => Ok(None),
            Some(_) => self.path(key).map(Some),
        }
    }

    /// Short SHA-256 over the result-relevant settings.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, e) in &self.values {
            if !UNHASHED.contains(&k.as_str()) {
                h.update(format!("{k}={}\n", e.value));
            }
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Every key with a value, for echoing into reports.
    pub fn effective(&self) -> BTreeMap<String, String> {
        self.values.iter().map(|(k, e)| (k.clone(), e.value.clone())).collect()
    }
}
