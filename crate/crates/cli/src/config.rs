//! Experiment config files: flat `key = value` TOML.
//!
//! ```toml
//! a = 0.3
//! b = 0.5
//! c = 0.5
//! N = 10
//! horizon = 100
//! master_seed = 42
//! mu0 = [0.2, 0.3, 0.5]
//! # optional: K, theta0 (defaults to mu0), coords, labels, source_choice
//! ```
//!
//! [`ExperimentConfig::canonical_text`] is itself a valid config file.

use std::path::Path;

use collapse_core::{ExperimentConfig, ProbVector, SourceChoice, Support};
use serde::Deserialize;
use toml::{Table, Value};

use crate::error::{CliError, Result};

pub const KEYS: &[&str] = &[
    "a",
    "b",
    "c",
    "N",
    "K",
    "horizon",
    "master_seed",
    "source_choice",
    "mu0",
    "theta0",
    "coords",
    "labels",
];

const DEFAULT_HORIZON: usize = 100;

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Seed {
    Int(u64),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    a: f64,
    b: Option<f64>,
    c: Option<f64>,
    #[serde(rename = "N")]
    batch_size: usize,
    #[serde(rename = "K")]
    k: Option<usize>,
    horizon: Option<usize>,
    master_seed: Option<Seed>,
    source_choice: Option<SourceChoice>,
    mu0: Vec<f64>,
    theta0: Option<Vec<f64>>,
    coords: Option<Vec<f64>>,
    labels: Option<Vec<String>>,
}

fn field<T>(name: &str, r: collapse_core::Result<T>) -> Result<T> {
    r.map_err(|e| CliError::Config(format!("{name}: {e}")))
}

impl RawConfig {
    fn into_config(self) -> Result<ExperimentConfig> {
        let k = self.mu0.len();
        if let Some(declared) = self.k {
            if declared != k {
                return Err(CliError::Config(format!(
                    "K: declared {declared} but mu0 has {k} weights"
                )));
            }
        }
        let mut support = field("mu0", Support::new(k))?;
        if let Some(coords) = self.coords {
            support = field("coords", support.with_coords(coords))?;
        }
        if let Some(labels) = self.labels {
            support = field("labels", support.with_labels(labels))?;
        }
        let mu0 = field("mu0", ProbVector::new(self.mu0))?;
        let theta0 = match self.theta0 {
            Some(w) => field("theta0", ProbVector::new(w))?,
            None => mu0.clone(),
        };
        let b = self.b.unwrap_or(0.0);
        let c = self.c.unwrap_or(1.0 - b);
        let master_seed = match self.master_seed {
            None => 0,
            Some(Seed::Int(s)) => s,
            Some(Seed::Text(s)) => s
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("master_seed: not a u64: {s:?}")))?,
        };
        let cfg = ExperimentConfig {
            a: self.a,
            b,
            c,
            batch_size: self.batch_size,
            support,
            mu0,
            theta0,
            horizon: self.horizon.unwrap_or(DEFAULT_HORIZON),
            master_seed,
            source_choice: self.source_choice.unwrap_or_default(),
        };
        cfg.validate()
            .map_err(|e| CliError::Config(e.to_string().replace("invalid argument: ", "")))?;
        Ok(cfg)
    }
}

/// Splits `key=value` and parses the value as a TOML value. Bare words that
/// are not valid TOML are taken as strings.
pub fn parse_override(spec: &str) -> Result<(String, Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {spec:?} is not key=value")))?;
    let key = key.trim();
    if !KEYS.contains(&key) {
        return Err(CliError::Config(format!(
            "override {spec:?}: unknown key {key:?}"
        )));
    }
    let raw = raw.trim();
    if raw.is_empty() {
        return Err(CliError::Config(format!("override {spec:?}: empty value")));
    }
    let value = match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) if t.len() == 1 => t.remove("v").expect("single key"),
        _ => Value::String(raw.to_string()),
    };
    Ok((key.to_string(), value))
}

/// Parses config text, applying `overrides` (in order) before validation.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
    for spec in overrides {
        let (key, value) = parse_override(spec)?;
        table.insert(key, value);
    }
    let raw: RawConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
    raw.into_config()
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text, overrides)
}
