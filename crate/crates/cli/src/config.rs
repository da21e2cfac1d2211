//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use quantree::{BuildConfig, Driver, Error, EulerModel, ModelKind, Payoff, RbsdeProblem, Result};

pub const KEYS: &[&str] = &[
    "model",
    "mu",
    "sigma",
    "r",
    "R",
    "vartheta",
    "delta_exp",
    "rho",
    "lambda",
    "x0",
    "x0_2",
    "T",
    "n_steps",
    "grid_size",
    "noise_grid_size",
    "strike",
    "quad_legendre",
    "quad_laguerre",
    "mc_paths",
    "seed",
    "obstacle",
    "payoff",
    "driver",
    "transition_mode",
    "grid_cache",
    "threads",
];

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    source: PathBuf,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

impl RunConfig {
    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut cfg = RunConfig {
            values: BTreeMap::new(),
            source: source.to_path_buf(),
        };
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: source.to_path_buf(),
                line: n + 1,
                detail: format!("expected key = value, got {line:?}"),
            })?;
            let k = k.trim();
            if cfg.values.contains_key(k) {
                return Err(Error::Parse {
                    path: source.to_path_buf(),
                    line: n + 1,
                    detail: format!("key {k} given twice"),
                });
            }
            cfg.set(k, v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Sets or overrides a key; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(invalid(format!("unknown config key {key:?}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| {
            invalid(format!("missing required key {key} in {}", self.source.display()))
        })
    }

    fn num<T: std::str::FromStr>(&self, key: &str, s: &str) -> Result<T> {
        s.parse().map_err(|_| invalid(format!("key {key}: cannot parse {s:?}")))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let v: f64 = self.num(key, self.require(key)?)?;
        if !v.is_finite() {
            return Err(invalid(format!("key {key} must be finite")));
        }
        Ok(v)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            Some(_) => self.f64(key),
            None => Ok(default),
        }
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.num(key, self.require(key)?)
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            Some(s) => self.num(key, s),
            None => Ok(default),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key).map(str::to_ascii_lowercase).as_deref() {
            None => Ok(default),
            Some("true" | "1" | "yes" | "on") => Ok(true),
            Some("false" | "0" | "no" | "off") => Ok(false),
            Some(other) => Err(invalid(format!("key {key}: expected true or false, got {other:?}"))),
        }
    }

    pub fn threads(&self) -> Result<Option<usize>> {
        self.get("threads").map(|s| self.num("threads", s)).transpose()
    }

    pub fn model(&self) -> Result<EulerModel> {
        let id = self.require("model")?;
        let horizon = self.f64("T")?;
        let steps = self.usize("n_steps")?;
        let x0 = self.f64("x0")?;
        let (kind, start) = match id {
            "bs_euler" => (
                ModelKind::BlackScholesEuler {
                    mu: self.f64_or("mu", 0.0)?,
                    sigma: self.f64("sigma")?,
                },
                vec![x0],
            ),
            "bs_exact" => (
                ModelKind::BlackScholesExact {
                    mu: self.f64_or("mu", 0.0)?,
                    sigma: self.f64("sigma")?,
                },
                vec![x0],
            ),
            "cev_euler" => (
                ModelKind::CevEuler {
                    mu: self.f64_or("mu", 0.0)?,
                    vartheta: self.f64("vartheta")?,
                    delta: self.f64("delta_exp")?,
                },
                vec![x0],
            ),
            "bs2d" => (
                ModelKind::CorrelatedBs2d {
                    r: self.f64_or("r", 0.0)?,
                    sigma: self.f64("sigma")?,
                    rho: self.f64_or("rho", 0.0)?,
                },
                vec![x0, self.f64("x0_2")?],
            ),
            other => {
                return Err(invalid(format!(
                    "unknown model {other:?} (expected bs_euler, bs_exact, cev_euler or bs2d)"
                )))
            }
        };
        EulerModel::new(kind, horizon, steps, start)
    }

    pub fn sizes(&self, model: &EulerModel) -> Result<Vec<usize>> {
        Ok(vec![self.usize("grid_size")?; model.steps()])
    }

    pub fn problem(&self, model: &EulerModel) -> Result<RbsdeProblem> {
        let default_payoff = if model.dim() == 2 { "exchange" } else { "call" };
        let payoff = match self.get("payoff").unwrap_or(default_payoff) {
            "call" => Payoff::Call {
                strike: self.f64("strike")?,
            },
            "put" => Payoff::Put {
                strike: self.f64("strike")?,
            },
            "exchange" => Payoff::Exchange {
                lambda: self.f64_or("lambda", 0.0)?,
            },
            other => return Err(invalid(format!("unknown payoff {other:?} (expected call, put or exchange)"))),
        };
        let default_driver = if self.get("R").is_some() { "bidask" } else { "zero" };
        let driver = match self.get("driver").unwrap_or(default_driver) {
            "zero" => Driver::Zero,
            "linear" => {
                let r = self.f64("r")?;
                Driver::Custom(std::sync::Arc::new(move |_, _, y, _| -r * y))
            }
            "bidask" => Driver::BidAsk {
                r: self.f64("r")?,
                big_r: self.f64("R")?,
                model: model.clone(),
            },
            other => return Err(invalid(format!("unknown driver {other:?} (expected zero, linear or bidask)"))),
        };
        let mut p = RbsdeProblem::american(driver, payoff);
        p.obstacle_enabled = self.bool_or("obstacle", true)?;
        Ok(p)
    }

    pub fn build_config(&self) -> Result<BuildConfig> {
        let d = BuildConfig::default();
        Ok(BuildConfig {
            legendre_order: self.usize_or("quad_legendre", d.legendre_order)?,
            laguerre_order: self.usize_or("quad_laguerre", d.laguerre_order)?,
            transition_mode: match self.get("transition_mode") {
                Some(s) => s.parse()?,
                None => d.transition_mode,
            },
            mc_paths: self.usize_or("mc_paths", d.mc_paths)?,
            seed: self.get("seed").map(|s| self.num("seed", s)).transpose()?.unwrap_or(d.seed),
            noise_grid_size: self.usize_or("noise_grid_size", d.noise_grid_size)?,
            grid_cache: self.get("grid_cache").map(PathBuf::from),
            ..d
        })
    }
}
