//! Run configuration and machine-readable check reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const ENGINE_VERSION: &str = concat!("ncmodsym-core ", env!("CARGO_PKG_VERSION"));

/// Smallest tolerance accepted from configuration: 100 machine epsilons.
pub const MIN_TOLERANCE: f64 = 100.0 * f64::EPSILON;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub depth: usize,
    pub n_max: usize,
    pub nodes: usize,
    pub steps: f64,
    pub height: f64,
    /// Overrides the per-check tolerance when set.
    pub tol: Option<f64>,
    pub cache_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { depth: 2, n_max: 96, nodes: 48, steps: 400.0, height: 12.0, tol: None, cache_dir: None, out: None }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.n_max == 0 || self.nodes == 0 {
            return Err(Error::Invalid("depth, nmax and nodes must be positive".into()));
        }
        if !(self.steps > 0.0 && self.height > 0.0) {
            return Err(Error::Invalid("steps and height must be positive".into()));
        }
        if let Some(t) = self.tol {
            if !(t >= MIN_TOLERANCE) {
                return Err(Error::Invalid(format!("tolerance {t} is below {MIN_TOLERANCE:e}")));
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_config_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| Error::Invalid(format!("config line {}: expected key = value", i + 1)))?;
            self.set(key.trim(), value.trim()).map_err(|e| Error::Invalid(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn load_config(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        self.apply_config_text(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Invalid(format!("bad value '{v}' for {key}")))
        }
        match key {
            "depth" => self.depth = num(key, value)?,
            "nmax" | "n_max" => self.n_max = num(key, value)?,
            "nodes" => self.nodes = num(key, value)?,
            "steps" => self.steps = num(key, value)?,
            "height" => self.height = num(key, value)?,
            "tol" => self.tol = Some(num(key, value)?),
            "cache-dir" | "cache_dir" => self.cache_dir = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            _ => return Err(Error::Invalid(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn tolerance(&self, default: f64) -> f64 {
        self.tol.unwrap_or(default)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckRow {
    /// Non-finite residuals fail.
    pub fn new(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        CheckRow { name: name.into(), residual, tolerance, pass: residual.is_finite() && residual <= tolerance }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub subcommand: String,
    pub inputs: BTreeMap<String, Value>,
    pub checks: Vec<CheckRow>,
    pub payload: Value,
    pub engine_version: String,
    /// Wall-clock milliseconds; the only nondeterministic field.
    pub timing_ms: Option<f64>,
}

impl Report {
    pub fn new(subcommand: &str) -> Self {
        Report {
            subcommand: subcommand.to_string(),
            inputs: BTreeMap::new(),
            checks: Vec::new(),
            payload: Value::Null,
            engine_version: ENGINE_VERSION.to_string(),
            timing_ms: None,
        }
    }

    pub fn input(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.inputs.insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
        self
    }

    pub fn check(&mut self, name: impl Into<String>, residual: f64, tolerance: f64) -> &mut Self {
        self.checks.push(CheckRow::new(name, residual, tolerance));
        self
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }

    /// Same as [`to_json_string`](Self::to_json_string) with the timing removed.
    pub fn deterministic_json(&self) -> String {
        let mut r = self.clone();
        r.timing_ms = None;
        r.to_json_string()
    }

    pub fn summary_lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| {
                format!("[{}] {}: residual {:.3e} (tol {:.1e})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.residual, c.tolerance)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_text_overrides() {
        let mut c = RunConfig::default();
        c.apply_config_text("# comment\ndepth = 3\nnmax=120 # trailing\n\ntol = 1e-9\n").unwrap();
        assert_eq!((c.depth, c.n_max, c.tol), (3, 120, Some(1e-9)));
        assert!(c.validate().is_ok());
        assert!(c.apply_config_text("colour = red").is_err());
        assert!(c.apply_config_text("depth 3").is_err());
        c.tol = Some(1e-20);
        assert!(c.validate().is_err());
        c.tol = None;
        c.depth = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn pass_iff_within_tolerance() {
        let mut r = Report::new("x");
        r.check("a", 1e-9, 1e-8);
        assert!(r.passed());
        r.check("b", f64::NAN, 1.0);
        assert!(!r.passed());
        assert!(!CheckRow::new("c", 2.0, 1.0).pass);
    }

    #[test]
    fn deterministic_output_ignores_timing() {
        let mut a = Report::new("x");
        a.input("depth", 2).input("alpha", "b").check("a", 1e-9, 1e-8);
        let mut b = a.clone();
        a.timing_ms = Some(1.0);
        b.timing_ms = Some(2.0);
        assert_eq!(a.deterministic_json(), b.deterministic_json());
        let back: Report = serde_json::from_str(&a.to_json_string()).unwrap();
        assert_eq!(back, a);
    }
}
