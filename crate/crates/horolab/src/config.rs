//! Flat `key = value` configuration with command-line overrides.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::PathBuf;
use thiserror::Error;

use crate::experiments;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: cannot read `{value}` as {expected}")]
    BadValue { key: String, value: String, expected: &'static str },
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("override `{0}` has no value")]
    MissingValue(String),
    #[error("config names experiment `{found}` but `{requested}` was requested")]
    ExperimentMismatch { requested: String, found: String },
    #[error("cannot read config file: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Int,
    Real,
    Str,
    /// Comma-separated reals, optionally in brackets.
    Vector,
}

impl ParamKind {
    fn name(self) -> &'static str {
        match self {
            Self::Int => "an integer",
            Self::Real => "a real number",
            Self::Str => "a string",
            Self::Vector => "a comma-separated list of reals",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Str(String),
    Vector(Vec<f64>),
}

impl ParamValue {
    pub fn parse(key: &str, kind: ParamKind, text: &str) -> Result<Self, ConfigError> {
        let bad = || ConfigError::BadValue { key: key.to_string(), value: text.to_string(), expected: kind.name() };
        let text = text.trim();
        match kind {
            ParamKind::Int => {
                let v: f64 = text.parse().map_err(|_| bad())?;
                if v.fract() != 0.0 || v.abs() > 9.0e15 {
                    return Err(bad());
                }
                Ok(Self::Int(v as i64))
            }
            ParamKind::Real => text.parse().map(Self::Real).map_err(|_| bad()),
            ParamKind::Str => Ok(Self::Str(text.trim_matches('"').to_string())),
            ParamKind::Vector => {
                let inner = text.trim_start_matches('[').trim_end_matches(']').trim();
                if inner.is_empty() {
                    return Ok(Self::Vector(Vec::new()));
                }
                inner
                    .split(',')
                    .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
                    .collect::<Result<Vec<_>, _>>()
                    .map(Self::Vector)
            }
        }
    }

    /// Canonical text form, used for hashing and manifests.
    pub fn canonical(&self) -> String {
        match self {
            Self::Int(v) => v.to_string(),
            Self::Real(v) => format!("{v:?}"),
            Self::Str(s) => s.clone(),
            Self::Vector(v) => v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(","),
        }
    }
}

/// One declared parameter of an experiment.
#[derive(Debug, Clone, Copy)]
pub struct ParamSpec {
    pub key: &'static str,
    pub kind: ParamKind,
    pub default: &'static str,
    pub help: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub seed: u64,
    pub workers: usize,
    pub output_dir: PathBuf,
    pub params: BTreeMap<String, ParamValue>,
}

/// Split a config file into `(key, value)` pairs. `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax { line: i + 1, text: raw.to_string() });
        };
        let k = k.trim();
        if k.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1, text: raw.to_string() });
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Turn `--key value` and `--key=value` arguments into pairs.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let Some(body) = a.strip_prefix("--") else {
            return Err(ConfigError::Syntax { line: 0, text: a.clone() });
        };
        if let Some((k, v)) = body.split_once('=') {
            out.push((k.replace('-', "_"), v.to_string()));
        } else {
            let v = it.next().ok_or_else(|| ConfigError::MissingValue(a.clone()))?;
            out.push((body.replace('-', "_"), v.clone()));
        }
    }
    Ok(out)
}

impl ExperimentConfig {
    /// Resolve file entries, then overrides, against the experiment's
    /// declared parameters. Undeclared keys are rejected.
    pub fn resolve(experiment: &str, entries: &[(String, String)]) -> Result<Self, ConfigError> {
        let schema = experiments::schema(experiment).ok_or_else(|| ConfigError::UnknownExperiment(experiment.into()))?;
        let mut cfg = Self {
            experiment: experiment.to_string(),
            seed: 0,
            workers: 1,
            output_dir: PathBuf::from("horolab-out"),
            params: BTreeMap::new(),
        };
        for spec in schema {
            cfg.params.insert(spec.key.to_string(), ParamValue::parse(spec.key, spec.kind, spec.default)?);
        }
        for (k, v) in entries {
            match k.as_str() {
                "experiment" => {
                    if v != experiment {
                        return Err(ConfigError::ExperimentMismatch { requested: experiment.into(), found: v.clone() });
                    }
                }
                "seed" => {
                    cfg.seed = v.parse().map_err(|_| ConfigError::BadValue {
                        key: k.clone(),
                        value: v.clone(),
                        expected: "an unsigned 64-bit integer",
                    })?
                }
                "workers" => {
                    cfg.workers = v.parse().ok().filter(|&w: &usize| w > 0).ok_or_else(|| ConfigError::BadValue {
                        key: k.clone(),
                        value: v.clone(),
                        expected: "a positive integer",
                    })?
                }
                "output_dir" => cfg.output_dir = PathBuf::from(v),
                _ => {
                    let spec = schema.iter().find(|s| s.key == k).ok_or_else(|| ConfigError::UnknownKey(k.clone()))?;
                    cfg.params.insert(k.clone(), ParamValue::parse(k, spec.kind, v)?);
                }
            }
        }
        Ok(cfg)
    }

    /// Lines `key=value` for everything that influences results. Worker count
    /// and output location are excluded.
    pub fn canonical_text(&self) -> String {
        let mut s = format!("experiment={}\nseed={}\n", self.experiment, self.seed);
        for (k, v) in &self.params {
            s.push_str(&format!("{k}={}\n", v.canonical()));
        }
        s
    }

    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.canonical_text().as_bytes()))
    }

    fn get(&self, key: &str) -> &ParamValue {
        self.params.get(key).unwrap_or_else(|| panic!("experiment {} reads undeclared key {key}", self.experiment))
    }

    pub fn int(&self, key: &str) -> i64 {
        match self.get(key) {
            ParamValue::Int(v) => *v,
            other => panic!("{key} is not an integer: {other:?}"),
        }
    }

    /// Integer parameter that must be non-negative.
    pub fn count(&self, key: &str) -> Result<usize, ConfigError> {
        let v = self.int(key);
        usize::try_from(v).map_err(|_| ConfigError::BadValue {
            key: key.into(),
            value: v.to_string(),
            expected: "a non-negative integer",
        })
    }

    pub fn real(&self, key: &str) -> f64 {
        match self.get(key) {
            ParamValue::Real(v) => *v,
            other => panic!("{key} is not a real: {other:?}"),
        }
    }

    pub fn string(&self, key: &str) -> &str {
        match self.get(key) {
            ParamValue::Str(v) => v,
            other => panic!("{key} is not a string: {other:?}"),
        }
    }

    pub fn vector(&self, key: &str) -> &[f64] {
        match self.get(key) {
            ParamValue::Vector(v) => v,
            other => panic!("{key} is not a vector: {other:?}"),
        }
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
