//! Run configuration: defaults, key=value config files, validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Unnormalized,
    Normalized,
    Solve,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "unnormalized" => Ok(Mode::Unnormalized),
            "normalized" => Ok(Mode::Normalized),
            "solve" => Ok(Mode::Solve),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected unnormalized, normalized or solve)"
            ))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    /// Sphere dimension n (1 or 2).
    pub n: usize,
    pub resolution: usize,
    pub p: f64,
    /// Weight expression in u1, u2, u3.
    pub phi: String,
    /// Initial body spec, e.g. "ball:1" or "perturbed_ball:1,0.1,2,42".
    pub init: String,
    pub mode: Mode,
    pub tol: f64,
    pub max_tau: f64,
    /// Horizon for unnormalized runs; clamped by the blow-up policy when
    /// p < n+1. None picks the policy default.
    pub t_end: Option<f64>,
    /// Optional upper clamp on dt (fixed-step studies).
    pub dt_max: Option<f64>,
    pub out: PathBuf,
    /// Default seed, substituted into perturbed_ball specs that omit theirs.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: 2,
            resolution: 32,
            p: 2.0,
            phi: "1".into(),
            init: "ball:1".into(),
            mode: Mode::Solve,
            tol: 1e-6,
            max_tau: 50.0,
            t_end: None,
            dt_max: None,
            out: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n != 1 && self.n != 2 {
            return Err(Error::Config(format!("n = {} unsupported (1 or 2)", self.n)));
        }
        let n1 = (self.n + 1) as f64;
        if !(self.p > -n1) {
            return Err(Error::Config(format!(
                "p = {} outside the admissible range p > -(n+1) = {}",
                self.p, -n1
            )));
        }
        if self.resolution % 2 != 0 || self.resolution < 8 {
            return Err(Error::Config(format!(
                "resolution {} must be even and at least 8",
                self.resolution
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be positive".into()));
        }
        if !(self.max_tau > 0.0) {
            return Err(Error::Config("max_tau must be positive".into()));
        }
        if let Some(t) = self.t_end {
            if !(t > 0.0) {
                return Err(Error::Config("t_end must be positive".into()));
            }
        }
        if let Some(d) = self.dt_max {
            if !(d > 0.0) {
                return Err(Error::Config("dt_max must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn set_key(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |e: &dyn std::fmt::Display| Error::Config(format!("bad value for {key}: {e}"));
        match key {
            "n" => self.n = value.parse().map_err(|e| bad(&e))?,
            "resolution" | "res" => self.resolution = value.parse().map_err(|e| bad(&e))?,
            "p" => self.p = value.parse().map_err(|e| bad(&e))?,
            "phi" => self.phi = value.to_string(),
            "init" => self.init = value.to_string(),
            "mode" => self.mode = value.parse()?,
            "tol" => self.tol = value.parse().map_err(|e| bad(&e))?,
            "max_tau" => self.max_tau = value.parse().map_err(|e| bad(&e))?,
            "t_end" => self.t_end = Some(value.parse().map_err(|e| bad(&e))?),
            "dt_max" => self.dt_max = Some(value.parse().map_err(|e| bad(&e))?),
            "out" => self.out = PathBuf::from(value),
            "seed" => self.seed = value.parse().map_err(|e| bad(&e))?,
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Apply a key=value config file (# comments, blank lines allowed).
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{}:{}: expected key = value",
                    path.display(),
                    lineno + 1
                )));
            };
            self.set_key(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Effective initial-body spec: splice the config seed into a
    /// perturbed_ball spec that omits its own.
    pub fn effective_init(&self) -> String {
        if let Some(args) = self.init.strip_prefix("perturbed_ball:") {
            if args.split(',').count() == 3 {
                return format!("perturbed_ball:{args},{}", self.seed);
            }
        }
        self.init.clone()
    }
}
