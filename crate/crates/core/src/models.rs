//! Diffusion models and the one-step Euler operator.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quantizer::{Component, ComponentLaw, GaussianMixture, Grid};

/// Drift `b(t, x)` written into `out` (length `d`).
pub type DriftFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;
/// Diffusion `sigma(t, x)` written row-major into `out` (`d x q`).
pub type DiffusionFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;

#[derive(Clone)]
pub enum ModelKind {
    /// `X + mu X dt + sigma X sqrt(dt) e`.
    BlackScholesEuler { mu: f64, sigma: f64 },
    /// `X exp((mu - sigma^2/2) dt + sigma sqrt(dt) e)`.
    BlackScholesExact { mu: f64, sigma: f64 },
    /// `X + mu X dt + vartheta max(X, 0)^delta sqrt(dt) e`.
    CevEuler { mu: f64, vartheta: f64, delta: f64 },
    /// Two log-normal assets with common rate and volatility and correlated noise.
    CorrelatedBs2d { r: f64, sigma: f64, rho: f64 },
    /// Euler scheme with user coefficients.
    Custom {
        dim: usize,
        noise_dim: usize,
        drift: Arc<DriftFn>,
        diffusion: Arc<DiffusionFn>,
    },
}

impl fmt::Debug for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::BlackScholesEuler { mu, sigma } => write!(f, "BlackScholesEuler {{ mu: {mu}, sigma: {sigma} }}"),
            ModelKind::BlackScholesExact { mu, sigma } => write!(f, "BlackScholesExact {{ mu: {mu}, sigma: {sigma} }}"),
            ModelKind::CevEuler { mu, vartheta, delta } => {
                write!(f, "CevEuler {{ mu: {mu}, vartheta: {vartheta}, delta: {delta} }}")
            }
            ModelKind::CorrelatedBs2d { r, sigma, rho } => {
                write!(f, "CorrelatedBs2d {{ r: {r}, sigma: {sigma}, rho: {rho} }}")
            }
            ModelKind::Custom { dim, noise_dim, .. } => write!(f, "Custom {{ dim: {dim}, noise_dim: {noise_dim} }}"),
        }
    }
}

impl ModelKind {
    /// Identifier used in configs and tree metadata.
    pub fn id(&self) -> &'static str {
        match self {
            ModelKind::BlackScholesEuler { .. } => "bs_euler",
            ModelKind::BlackScholesExact { .. } => "bs_exact",
            ModelKind::CevEuler { .. } => "cev_euler",
            ModelKind::CorrelatedBs2d { .. } => "bs2d",
            ModelKind::Custom { .. } => "custom",
        }
    }
}

/// A diffusion on the uniform mesh `t_k = k T / n`.
#[derive(Debug, Clone)]
pub struct EulerModel {
    kind: ModelKind,
    horizon: f64,
    steps: usize,
    x0: Vec<f64>,
}

impl EulerModel {
    pub fn new(kind: ModelKind, horizon: f64, steps: usize, x0: Vec<f64>) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::invalid("number of steps must be at least 1"));
        }
        let check_pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        let check_finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be finite, got {v}")))
            }
        };
        let dim = match &kind {
            ModelKind::BlackScholesEuler { mu, sigma } | ModelKind::BlackScholesExact { mu, sigma } => {
                check_finite("mu", *mu)?;
                check_pos("sigma", *sigma)?;
                1
            }
            ModelKind::CevEuler { mu, vartheta, delta } => {
                check_finite("mu", *mu)?;
                check_pos("vartheta", *vartheta)?;
                if !(*delta > 0.0 && *delta < 1.0) {
                    return Err(Error::invalid(format!("delta_exp must lie in (0, 1), got {delta}")));
                }
                1
            }
            ModelKind::CorrelatedBs2d { r, sigma, rho } => {
                check_finite("r", *r)?;
                check_pos("sigma", *sigma)?;
                if !(*rho >= -1.0 && *rho <= 1.0) {
                    return Err(Error::invalid(format!("rho must lie in [-1, 1], got {rho}")));
                }
                2
            }
            ModelKind::Custom { dim, noise_dim, .. } => {
                if *dim == 0 || *noise_dim == 0 {
                    return Err(Error::invalid("custom model dimensions must be positive"));
                }
                *dim
            }
        };
        if x0.len() != dim {
            return Err(Error::invalid(format!("x0 has {} coordinates, model needs {dim}", x0.len())));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("x0 must be finite"));
        }
        Ok(EulerModel {
            kind,
            horizon,
            steps,
            x0,
        })
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn id(&self) -> &'static str {
        self.kind.id()
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            ModelKind::CorrelatedBs2d { .. } => 2,
            ModelKind::Custom { dim, .. } => *dim,
            _ => 1,
        }
    }

    pub fn noise_dim(&self) -> usize {
        match &self.kind {
            ModelKind::CorrelatedBs2d { .. } => 2,
            ModelKind::Custom { noise_dim, .. } => *noise_dim,
            _ => 1,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    /// Same model with another step count.
    pub fn with_steps(&self, steps: usize) -> Result<Self> {
        EulerModel::new(self.kind.clone(), self.horizon, steps, self.x0.clone())
    }

    /// Same model from another starting point.
    pub fn with_x0(&self, x0: Vec<f64>) -> Result<Self> {
        EulerModel::new(self.kind.clone(), self.horizon, self.steps, x0)
    }

    /// `(mu, sigma)` for the scalar Black-Scholes models.
    pub fn black_scholes_params(&self) -> Option<(f64, f64)> {
        match self.kind {
            ModelKind::BlackScholesEuler { mu, sigma } | ModelKind::BlackScholesExact { mu, sigma } => Some((mu, sigma)),
            _ => None,
        }
    }

    /// Whether the step is the exact log-normal map rather than an Euler step.
    pub fn is_exact_lognormal(&self) -> bool {
        matches!(
            self.kind,
            ModelKind::BlackScholesExact { .. } | ModelKind::CorrelatedBs2d { .. }
        )
    }

    /// Drift `b(t, x)` in absolute units (`mu x` for Black-Scholes).
    pub fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            ModelKind::BlackScholesEuler { mu, .. }
            | ModelKind::BlackScholesExact { mu, .. }
            | ModelKind::CevEuler { mu, .. } => out[0] = mu * x[0],
            ModelKind::CorrelatedBs2d { r, .. } => {
                out[0] = r * x[0];
                out[1] = r * x[1];
            }
            ModelKind::Custom { drift, .. } => drift(t, x, out),
        }
    }

    /// Diffusion matrix `sigma(t, x)`, row-major `d x q`.
    pub fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            ModelKind::BlackScholesEuler { sigma, .. } | ModelKind::BlackScholesExact { sigma, .. } => {
                out[0] = sigma * x[0]
            }
            ModelKind::CevEuler { vartheta, delta, .. } => out[0] = vartheta * x[0].max(0.0).powf(*delta),
            ModelKind::CorrelatedBs2d { sigma, rho, .. } => {
                out[0] = sigma * x[0];
                out[1] = 0.0;
                out[2] = sigma * rho * x[1];
                out[3] = sigma * (1.0 - rho * rho).max(0.0).sqrt() * x[1];
            }
            ModelKind::Custom { diffusion, .. } => diffusion(t, x, out),
        }
    }

    /// Scalar drift and diffusion for 1-d models.
    pub fn coefficients_1d(&self, t: f64, x: f64) -> (f64, f64) {
        let mut b = [0.0];
        let mut s = vec![0.0; self.noise_dim()];
        self.drift(t, &[x], &mut b);
        self.diffusion(t, &[x], &mut s);
        (b[0], s[0])
    }

    /// One step `E_k(x, eps)` written into `out`.
    pub fn step_into(&self, k: usize, x: &[f64], eps: &[f64], out: &mut [f64]) {
        let dt = self.dt();
        let sq = dt.sqrt();
        match &self.kind {
            ModelKind::BlackScholesEuler { mu, sigma } => out[0] = x[0] * (1.0 + mu * dt + sigma * sq * eps[0]),
            ModelKind::BlackScholesExact { mu, sigma } => {
                out[0] = x[0] * ((mu - 0.5 * sigma * sigma) * dt + sigma * sq * eps[0]).exp()
            }
            ModelKind::CevEuler { mu, vartheta, delta } => {
                out[0] = x[0] + mu * x[0] * dt + vartheta * x[0].max(0.0).powf(*delta) * sq * eps[0]
            }
            ModelKind::CorrelatedBs2d { r, sigma, rho } => {
                let drift = (r - 0.5 * sigma * sigma) * dt;
                let e2 = rho * eps[0] + (1.0 - rho * rho).max(0.0).sqrt() * eps[1];
                out[0] = x[0] * (drift + sigma * sq * eps[0]).exp();
                out[1] = x[1] * (drift + sigma * sq * e2).exp();
            }
            ModelKind::Custom {
                dim,
                noise_dim,
                drift,
                diffusion,
            } => {
                let t = self.time(k);
                let mut b = vec![0.0; *dim];
                let mut s = vec![0.0; dim * noise_dim];
                drift(t, x, &mut b);
                diffusion(t, x, &mut s);
                for r in 0..*dim {
                    let noise: f64 = (0..*noise_dim).map(|c| s[r * noise_dim + c] * eps[c]).sum();
                    out[r] = x[r] + dt * b[r] + sq * noise;
                }
            }
        }
    }

    pub fn euler_step(&self, k: usize, x: &[f64], eps: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.step_into(k, x, eps, &mut out);
        out
    }

    /// Scalar law of `E_k(x, eps)` for 1-d models.
    pub fn step_law(&self, k: usize, x: f64) -> Result<ComponentLaw> {
        if self.dim() != 1 || self.noise_dim() != 1 {
            return Err(Error::invalid("scalar step laws need a 1-d model with 1-d noise"));
        }
        let dt = self.dt();
        if let ModelKind::BlackScholesExact { mu, sigma } = self.kind {
            if x > 0.0 {
                return Ok(ComponentLaw::LogNormal {
                    scale: x,
                    log_mean: (mu - 0.5 * sigma * sigma) * dt,
                    log_std: sigma * dt.sqrt(),
                });
            }
            return Ok(ComponentLaw::Normal { mean: x, std: 0.0 });
        }
        let (b, s) = self.coefficients_1d(self.time(k), x);
        Ok(ComponentLaw::Normal {
            mean: x + dt * b,
            std: dt.sqrt() * s.abs(),
        })
    }

    /// Law of `E_k(X, eps)` when `X` is distributed on the weighted grid.
    pub fn mixture_law(&self, k: usize, grid: &Grid) -> Result<GaussianMixture> {
        let w = grid
            .weights()
            .ok_or_else(|| Error::invalid("mixture law needs a grid with cell weights"))?;
        if grid.dim() != self.dim() {
            return Err(Error::invalid("grid and model dimensions differ"));
        }
        let comps = grid
            .coords()
            .iter()
            .zip(w)
            .map(|(&x, &p)| Ok(Component { law: self.step_law(k, x)?, weight: p }))
            .collect::<Result<Vec<_>>>()?;
        GaussianMixture::new(comps)
    }
}
