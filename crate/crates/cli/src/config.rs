//! Run configuration: a flat `key = value` file plus `--key value` overrides.
//!
//! Lines starting with `#` and blank lines are ignored. Every experiment
//! declares its keys with defaults; any other key is rejected. The reserved
//! keys `seed`, `workers` and `out` are accepted by every experiment, and
//! `experiment`, if present, must name the subcommand being run.

use std::collections::BTreeMap;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::experiments::{Experiment, Kind};
use crate::CliError;

const RESERVED: [&str; 3] = ["seed", "workers", "out"];

/// Fully resolved parameters for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    values: BTreeMap<String, String>,
}

/// Parses `key = value` lines into ordered pairs.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Config(format!("line {}: expected key = value, got {line:?}", lineno + 1)));
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(CliError::Config(format!("line {}: empty key", lineno + 1)));
        }
        pairs.push((k.to_string(), v.to_string()));
    }
    Ok(pairs)
}

impl RunConfig {
    /// Layers experiment defaults, then the file, then command-line overrides.
    pub fn resolve(
        experiment: Experiment,
        file: &[(String, String)],
        overrides: &[(String, String)],
    ) -> Result<Self, CliError> {
        let mut values: BTreeMap<String, String> =
            experiment.params().iter().map(|p| (p.key.to_string(), p.default.to_string())).collect();
        let mut reserved: BTreeMap<&str, String> = BTreeMap::new();
        for (k, v) in file.iter().chain(overrides) {
            let k = k.replace('-', "_");
            if k == "experiment" {
                if v != experiment.name() {
                    return Err(CliError::Config(format!(
                        "config is for experiment {v:?} but {:?} was requested",
                        experiment.name()
                    )));
                }
            } else if let Some(r) = RESERVED.iter().find(|r| **r == k) {
                reserved.insert(r, v.clone());
            } else if let Some(slot) = values.get_mut(&k) {
                *slot = v.clone();
            } else {
                return Err(CliError::Config(format!("unknown key {k:?} for experiment {}", experiment.name())));
            }
        }
        let seed = match reserved.get("seed") {
            Some(s) => s.parse().map_err(|_| CliError::Config(format!("seed: not an unsigned integer: {s:?}")))?,
            None => return Err(CliError::Config("seed is required".into())),
        };
        let workers = match reserved.get("workers") {
            Some(s) => match s.parse::<usize>() {
                Ok(w) if w > 0 => w,
                _ => return Err(CliError::Config(format!("workers: expected a positive integer, got {s:?}"))),
            },
            None => 1,
        };
        let out = reserved.get("out").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("results"));
        let cfg = Self { experiment, seed, workers, out, values };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Type-checks every declared key before any work starts.
    fn validate(&self) -> Result<(), CliError> {
        for p in self.experiment.params() {
            match p.kind {
                Kind::Int => self.usize(p.key).map(drop)?,
                Kind::Real => self.f64(p.key).map(drop)?,
                Kind::List => self.f64_list(p.key).map(drop)?,
                Kind::Text => {
                    if self.string(p.key).is_empty() {
                        return Err(CliError::Config(format!("{}: empty value", p.key)));
                    }
                }
            }
        }
        Ok(())
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("experiment does not declare key {key}"))
    }

    pub fn f64(&self, key: &str) -> Result<f64, CliError> {
        let s = self.raw(key);
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(CliError::Config(format!("{key}: not a finite number: {s:?}"))),
        }
    }

    pub fn usize(&self, key: &str) -> Result<usize, CliError> {
        let s = self.raw(key);
        s.parse().map_err(|_| CliError::Config(format!("{key}: not a nonnegative integer: {s:?}")))
    }

    /// Comma-separated numbers; a single number is a one-element list.
    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        let s = self.raw(key);
        let v: Result<Vec<f64>, _> = s.split(',').map(|p| p.trim().parse::<f64>()).collect();
        match v {
            Ok(v) if !v.is_empty() && v.iter().all(|x| x.is_finite()) => Ok(v),
            _ => Err(CliError::Config(format!("{key}: expected comma-separated numbers, got {s:?}"))),
        }
    }

    pub fn string(&self, key: &str) -> &str {
        self.raw(key)
    }

    /// Resolved parameters in key order, reserved keys excluded.
    pub fn values(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// SHA-256 over the experiment name, the seed and every resolved
    /// parameter. Worker count and output directory do not enter.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("experiment={}\nseed={}\n", self.experiment.name(), self.seed));
        for (k, v) in &self.values {
            h.update(format!("{k}={v}\n"));
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
