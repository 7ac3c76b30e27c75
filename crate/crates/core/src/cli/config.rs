//! Run configuration: flags, an optional `key = value` file, and defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

/// Values read from a configuration file.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    /// Parses lines of `key = value`; `#` starts a comment.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg: format!("expected key = value, got `{line}`"),
            })?;
            values.insert(k.trim().replace('-', "_"), v.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Flag value if given, else the parsed file value.
    pub fn pick<T: std::str::FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e| Error::domain(format!("config key `{key}` = `{v}`: {e}"))),
        }
    }

    pub fn pick_list(&self, flag: &[String], key: &str) -> Vec<String> {
        if !flag.is_empty() {
            return flag.to_vec();
        }
        self.get(key).map(split_list).unwrap_or_default()
    }

    pub fn pick_paths(&self, flag: &[PathBuf], key: &str) -> Vec<PathBuf> {
        if !flag.is_empty() {
            return flag.to_vec();
        }
        self.get(key).map(|v| split_list(v).into_iter().map(PathBuf::from).collect()).unwrap_or_default()
    }
}

pub fn split_list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

/// Parses `log:LO:HI:N` or a comma-separated list of values.
pub fn parse_nu_grid(spec: &str) -> Result<Vec<f64>> {
    let spec = spec.trim();
    if let Some(rest) = spec.strip_prefix("log:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::domain(format!("grid `{spec}` is not log:LO:HI:N")));
        }
        let lo: f64 = parts[0].parse().map_err(|_| Error::domain(format!("bad grid bound `{}`", parts[0])))?;
        let hi: f64 = parts[1].parse().map_err(|_| Error::domain(format!("bad grid bound `{}`", parts[1])))?;
        let n: usize = parts[2].parse().map_err(|_| Error::domain(format!("bad grid size `{}`", parts[2])))?;
        if !(lo > 0.0 && hi >= lo && n >= 1) {
            return Err(Error::domain(format!("grid `{spec}` needs 0 < LO <= HI and N >= 1")));
        }
        return Ok(crate::diagnose::log_grid(lo, hi, n));
    }
    let grid: Vec<f64> = split_list(spec)
        .iter()
        .map(|v| v.parse::<f64>().map_err(|_| Error::domain(format!("bad grid value `{v}`"))))
        .collect::<Result<_>>()?;
    if grid.is_empty() || grid.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::domain("degrees-of-freedom grid values must be positive"));
    }
    Ok(grid)
}

/// Everything a command ran with, echoed to `config.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub inputs: Vec<PathBuf>,
    pub schema: Option<String>,
    pub frequency: Option<f64>,
    pub models: Vec<String>,
    pub regime: Option<String>,
    pub nu_grid: Option<Vec<f64>>,
    pub out: PathBuf,
    pub seed: u64,
    pub threads: usize,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}
