//! Run configuration: flat `key = value` lines, `#` comments.

use std::collections::BTreeMap;
use std::path::Path;

use pnp_steric::ModelParams;
use toml::Value;

use crate::CliError;

const PARAM_KEYS: [&str; 12] = [
    "d1", "d2", "theta1", "theta2", "g11", "g12", "g21", "g22", "gamma1", "gamma2", "c1", "c2",
];

const NUMERIC_KEYS: [&str; 22] = [
    "domain_length",
    "grid_points",
    "dt",
    "t_end",
    "x0",
    "phi_min",
    "phi_max",
    "phi_samples",
    "u_min",
    "u_max",
    "u_samples",
    "init_phi",
    "tolerance",
    "sample_every",
    "perturbation",
    "mean_u",
    "poincare_constant",
    "snapshots",
    "max_newton",
    "table_spacing",
    "snapshot_every",
    "sigma_tolerance",
];

const TEXT_KEYS: [&str; 2] = ["selection", "prefix"];

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: ModelParams,
    values: BTreeMap<String, Value>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().replace('\n', " ")))?;
        let values: BTreeMap<String, Value> = table.into_iter().collect();
        Self::from_values(values)
    }

    fn from_values(values: BTreeMap<String, Value>) -> Result<Self, CliError> {
        for (key, value) in &values {
            let numeric =
                PARAM_KEYS.contains(&key.as_str()) || NUMERIC_KEYS.contains(&key.as_str());
            if numeric {
                as_number(key, value)?;
            } else if TEXT_KEYS.contains(&key.as_str()) {
                if !value.is_str() {
                    return Err(CliError::Config(format!(
                        "key `{key}` expects a quoted string"
                    )));
                }
            } else {
                return Err(CliError::Config(format!("unknown key `{key}`")));
            }
        }
        let get = |k: &str| -> Result<f64, CliError> {
            values
                .get(k)
                .ok_or_else(|| CliError::Config(format!("missing key `{k}`")))
                .and_then(|v| as_number(k, v))
        };
        let params = ModelParams {
            d1: get("d1")?,
            d2: get("d2")?,
            theta1: get("theta1")?,
            theta2: get("theta2")?,
            g11: get("g11")?,
            g12: get("g12")?,
            g21: get("g21")?,
            g22: get("g22")?,
            gamma1: get("gamma1")?,
            gamma2: get("gamma2")?,
            c1: get("c1")?,
            c2: get("c2")?,
        };
        Ok(Self { params, values })
    }

    /// Copy with one numeric key replaced.
    pub fn with_value(&self, key: &str, value: f64) -> Result<Self, CliError> {
        if !PARAM_KEYS.contains(&key) && !NUMERIC_KEYS.contains(&key) {
            return Err(CliError::Config(format!(
                "cannot sweep `{key}`: not a numeric key"
            )));
        }
        let mut values = self.values.clone();
        values.insert(key.to_string(), Value::Float(value));
        Self::from_values(values)
    }

    pub fn number(&self, key: &str) -> Result<f64, CliError> {
        match self.values.get(key) {
            Some(v) => as_number(key, v),
            None => Err(CliError::Config(format!("missing key `{key}`"))),
        }
    }

    pub fn number_or(&self, key: &str, default: f64) -> Result<f64, CliError> {
        match self.values.get(key) {
            Some(v) => as_number(key, v),
            None => Ok(default),
        }
    }

    pub fn count(&self, key: &str) -> Result<usize, CliError> {
        to_count(key, self.number(key)?)
    }

    pub fn count_or(&self, key: &str, default: usize) -> Result<usize, CliError> {
        match self.values.get(key) {
            Some(v) => to_count(key, as_number(key, v)?),
            None => Ok(default),
        }
    }

    pub fn text_or(&self, key: &str, default: &str) -> String {
        self.values
            .get(key)
            .and_then(|v| v.as_str())
            .unwrap_or(default)
            .to_string()
    }
}

fn as_number(key: &str, value: &Value) -> Result<f64, CliError> {
    let x = match value {
        Value::Float(f) => *f,
        Value::Integer(i) => *i as f64,
        _ => return Err(CliError::Config(format!("key `{key}` expects a number"))),
    };
    if !x.is_finite() {
        return Err(CliError::Config(format!("key `{key}` must be finite")));
    }
    Ok(x)
}

fn to_count(key: &str, x: f64) -> Result<usize, CliError> {
    if x < 0.0 || x.fract() != 0.0 || x > 1e9 {
        return Err(CliError::Config(format!(
            "key `{key}` expects a non-negative integer, got {x}"
        )));
    }
    Ok(x as usize)
}

/// A `key=lo:hi:n` sweep specification.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub key: String,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Sweep {
    pub fn parse(arg: &str) -> Result<Self, CliError> {
        let bad = || CliError::Config(format!("sweep `{arg}` is not of the form key=lo:hi:n"));
        let (key, range) = arg.split_once('=').ok_or_else(bad)?;
        let parts: Vec<&str> = range.split(':').collect();
        if parts.len() != 3 || key.trim().is_empty() {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if n == 0 || !lo.is_finite() || !hi.is_finite() {
            return Err(bad());
        }
        Ok(Self {
            key: key.trim().to_string(),
            lo,
            hi,
            n,
        })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.n - 1) as f64;
        (0..self.n)
            .map(|k| {
                if k == self.n - 1 {
                    self.hi
                } else {
                    self.lo + step * k as f64
                }
            })
            .collect()
    }
}
