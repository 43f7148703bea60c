//! Flat `key=value` config files, and the flag > file > env > default
//! resolution order.
//!
//! Keys are the long flag names without the leading dashes (`mod=16`,
//! `paper-linear-system=true`). Blank lines and `#` comments are skipped.
//! A run manifest is itself a valid config file for the same subcommand.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

/// Keys written by the manifest that carry no setting.
const METADATA: [&str; 3] = ["subcommand", "version", "timestamp"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub values: BTreeMap<String, String>,
    pub subcommand: Option<String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut out = ConfigFile::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Config(format!("config line {}: expected key=value, got '{line}'", no + 1)));
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(CliError::Config(format!("config line {}: empty key", no + 1)));
            }
            if k == "subcommand" {
                out.subcommand = Some(v.to_string());
                continue;
            }
            if METADATA.contains(&k) {
                continue;
            }
            if out.values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(CliError::Config(format!("config line {}: duplicate key '{k}'", no + 1)));
            }
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// Merges flags with a config file and records every resolved value.
#[derive(Debug)]
pub struct Resolver {
    file: BTreeMap<String, String>,
    snapshot: Vec<(String, String)>,
}

impl Resolver {
    /// Rejects keys outside `allowed` and a manifest written by another
    /// subcommand.
    pub fn new(file: Option<ConfigFile>, subcommand: &str, allowed: &[&str]) -> Result<Self, CliError> {
        let file = file.unwrap_or_default();
        if let Some(s) = &file.subcommand {
            if s != subcommand {
                return Err(CliError::Config(format!(
                    "config was written for '{s}', not '{subcommand}'"
                )));
            }
        }
        let allowed: BTreeSet<&str> = allowed.iter().copied().collect();
        if let Some(k) = file.values.keys().find(|k| !allowed.contains(k.as_str())) {
            return Err(CliError::Config(format!("unknown config key '{k}' for '{subcommand}'")));
        }
        Ok(Self {
            file: file.values,
            snapshot: Vec::new(),
        })
    }

    fn from_file<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        match self.file.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::Config(format!("config key '{key}': {e}"))),
        }
    }

    pub fn get_opt<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => self.from_file(key)?,
        };
        if let Some(v) = &v {
            self.record(key, v);
        }
        Ok(v)
    }

    pub fn get<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: impl FnOnce() -> T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => v,
            None => self.from_file(key)?.unwrap_or_else(default),
        };
        self.record(key, &v);
        Ok(v)
    }

    /// A switch is on when the flag is given or the file sets it to `true`.
    pub fn switch(&mut self, key: &str, flag: bool) -> Result<bool, CliError> {
        let v = flag || self.from_file::<bool>(key)?.unwrap_or(false);
        self.record(key, &v);
        Ok(v)
    }

    pub fn record(&mut self, key: &str, value: &dyn Display) {
        self.snapshot.retain(|(k, _)| k != key);
        self.snapshot.push((key.to_string(), value.to_string()));
    }

    pub fn snapshot(&self) -> &[(String, String)] {
        &self.snapshot
    }
}

/// Seed from the flag, the config file, `FTN_SEED`, then 1.
pub fn resolve_seed(r: &mut Resolver, flag: Option<u64>) -> Result<u64, CliError> {
    let env = match std::env::var("FTN_SEED") {
        Ok(s) => Some(
            s.trim()
                .parse::<u64>()
                .map_err(|e| CliError::Config(format!("FTN_SEED '{s}': {e}")))?,
        ),
        Err(_) => None,
    };
    r.get("seed", flag, || env.unwrap_or(1))
}

/// `start:step:stop` (inclusive), a comma list, or a single value.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = |why: &str| CliError::Config(format!("grid '{spec}': {why}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(&format!("'{s}' is not a number")));
    let parts: Vec<&str> = spec.split(':').collect();
    let grid = match parts.as_slice() {
        [start, step, stop] => {
            let (a, h, b) = (num(start)?, num(step)?, num(stop)?);
            if !(h > 0.0) || !(b >= a) {
                return Err(bad("need step > 0 and stop >= start"));
            }
            let count = ((b - a) / h + 1e-9).floor() as usize + 1;
            if count > 10_000 {
                return Err(bad("more than 10000 points"));
            }
            // round away the accumulated step error
            (0..count).map(|i| ((a + i as f64 * h) * 1e9).round() / 1e9).collect()
        }
        [list] => list.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
        _ => return Err(bad("expected start:step:stop or a comma list")),
    };
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(bad("non-finite value"));
    }
    Ok(grid)
}
