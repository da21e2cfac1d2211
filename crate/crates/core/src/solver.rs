//! Backward dynamic programming for reflected BSDEs on a quantization tree.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::EulerModel;
use crate::quantizer::io::{fmt_f64, write_atomic};
use crate::tree::{build_tree, BuildConfig, QuantizationTree, TreeMeta, TreeMethod};

/// Driver `f(t, x, y, z)`.
pub type DriverFn = dyn Fn(f64, &[f64], f64, &[f64]) -> f64 + Send + Sync;
/// Payoff `h(t, x)`.
pub type PayoffFn = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;

#[derive(Clone)]
pub enum Driver {
    Zero,
    /// Lending rate `r`, borrowing rate `R`: `f = -r y - theta z - (R - r) min(y - x z / sigma(x), 0)`
    /// with `theta = (b(x) - r x) / sigma(x)` taken from the model coefficients.
    BidAsk { r: f64, big_r: f64, model: EulerModel },
    Custom(Arc<DriverFn>),
}

impl fmt::Debug for Driver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Driver::Zero => f.write_str("Zero"),
            Driver::BidAsk { r, big_r, model } => write!(f, "BidAsk {{ r: {r}, R: {big_r}, model: {} }}", model.id()),
            Driver::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl Driver {
    /// Value of the driver and whether the `1 / sigma` terms had to be dropped.
    pub fn eval(&self, t: f64, x: &[f64], y: f64, z: &[f64]) -> (f64, bool) {
        match self {
            Driver::Zero => (0.0, false),
            Driver::BidAsk { r, big_r, model } => {
                let (b, s) = model.coefficients_1d(t, x[0]);
                if !(s > 0.0) {
                    return (-r * y - (big_r - r) * y.min(0.0), true);
                }
                let theta = (b - r * x[0]) / s;
                let stock = x[0] * z[0] / s;
                (-r * y - theta * z[0] - (big_r - r) * (y - stock).min(0.0), false)
            }
            Driver::Custom(f) => (f(t, x, y, z), false),
        }
    }
}

#[derive(Clone)]
pub enum Payoff {
    Call { strike: f64 },
    Put { strike: f64 },
    /// `max(exp(-lambda t) x_1 - x_2, 0)`.
    Exchange { lambda: f64 },
    Constant(f64),
    /// First coordinate.
    Identity,
    Custom(Arc<PayoffFn>),
}

impl fmt::Debug for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payoff::Call { strike } => write!(f, "Call({strike})"),
            Payoff::Put { strike } => write!(f, "Put({strike})"),
            Payoff::Exchange { lambda } => write!(f, "Exchange({lambda})"),
            Payoff::Constant(c) => write!(f, "Constant({c})"),
            Payoff::Identity => f.write_str("Identity"),
            Payoff::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl Payoff {
    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            Payoff::Call { strike } => (x[0] - strike).max(0.0),
            Payoff::Put { strike } => (strike - x[0]).max(0.0),
            Payoff::Exchange { lambda } => ((-lambda * t).exp() * x[0] - x[1]).max(0.0),
            Payoff::Constant(c) => *c,
            Payoff::Identity => x[0],
            Payoff::Custom(f) => f(t, x),
        }
    }

    fn min_dim(&self) -> usize {
        match self {
            Payoff::Exchange { .. } => 2,
            _ => 1,
        }
    }
}

/// Driver, obstacle `h(t, x)` and terminal payoff `g(x)`.
#[derive(Debug, Clone)]
pub struct RbsdeProblem {
    pub driver: Driver,
    pub obstacle: Payoff,
    pub terminal: Payoff,
    pub obstacle_enabled: bool,
}

impl RbsdeProblem {
    /// Reflected problem with `h = g = payoff`.
    pub fn american(driver: Driver, payoff: Payoff) -> Self {
        RbsdeProblem {
            driver,
            obstacle: payoff.clone(),
            terminal: payoff,
            obstacle_enabled: true,
        }
    }

    /// Unreflected problem with terminal payoff only.
    pub fn european(driver: Driver, payoff: Payoff) -> Self {
        RbsdeProblem {
            driver,
            obstacle: payoff.clone(),
            terminal: payoff,
            obstacle_enabled: false,
        }
    }
}

/// `y_k` and `z_k` on every grid; `z` has `q` entries per node and no terminal layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverSolution {
    pub y: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub price: f64,
    pub driver_calls: usize,
    pub warnings: Vec<String>,
}

impl SolverSolution {
    /// CSV rows `k,i,x_1..x_d,y,z_1..z_q`; terminal rows leave `z` empty.
    pub fn to_csv(&self, tree: &QuantizationTree) -> String {
        let (d, q) = (tree.dim(), tree.noise_dim());
        let mut s = String::from("k,i");
        for c in 1..=d {
            let _ = write!(s, ",x_{c}");
        }
        s.push_str(",y");
        for c in 1..=q {
            let _ = write!(s, ",z_{c}");
        }
        s.push('\n');
        for (k, ys) in self.y.iter().enumerate() {
            let g = tree.grid(k);
            for (i, y) in ys.iter().enumerate() {
                let _ = write!(s, "{k},{i}");
                for v in g.point(i) {
                    let _ = write!(s, ",{}", fmt_f64(*v));
                }
                let _ = write!(s, ",{}", fmt_f64(*y));
                for r in 0..q {
                    match self.z.get(k) {
                        Some(z) => {
                            let _ = write!(s, ",{}", fmt_f64(z[i * q + r]));
                        }
                        None => s.push(','),
                    }
                }
                s.push('\n');
            }
        }
        s
    }

    pub fn write_csv(&self, tree: &QuantizationTree, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_csv(tree))
    }
}

/// Backward recursion `y_n = g`, `y_k = max(h_k, alpha + dt f(t_k, x, alpha, beta))`
/// with `alpha = sum_j y_{k+1} p_ij` and `beta = (1/dt) sum_j y_{k+1} pi_ij`.
pub fn solve_bdpp(tree: &QuantizationTree, problem: &RbsdeProblem) -> Result<SolverSolution> {
    let d = tree.dim();
    let q = tree.noise_dim();
    let n = tree.steps();
    let dt = tree.dt();
    if problem.terminal.min_dim() > d || (problem.obstacle_enabled && problem.obstacle.min_dim() > d) {
        return Err(Error::invalid(format!("payoff needs dimension 2, tree has dimension {d}")));
    }
    if let Driver::BidAsk { model, .. } = &problem.driver {
        if model.dim() != d || d != 1 {
            return Err(Error::invalid("the bid-ask driver needs a scalar tree"));
        }
    }
    let mut warnings = Vec::new();
    let horizon = tree.time(n);
    let last: Vec<f64> = tree.grid(n).points().map(|x| problem.terminal.value(horizon, x)).collect();
    if let Some(i) = last.iter().position(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("terminal payoff is not finite at (k={n}, i={i})")));
    }
    if problem.obstacle_enabled {
        let below = tree
            .grid(n)
            .points()
            .zip(&last)
            .filter(|(x, g)| **g < problem.obstacle.value(horizon, x))
            .count();
        if below > 0 {
            warnings.push(format!("terminal payoff below the obstacle at {below} terminal points"));
        }
    }
    let mut y = vec![Vec::new(); n + 1];
    let mut z = vec![Vec::new(); n];
    y[n] = last;
    let mut calls = 0;
    let mut clamped = 0;
    for k in (0..n).rev() {
        let t = tree.time(k);
        let grid = tree.grid(k);
        let trans = tree.transition(k);
        let pi = tree.noise_moment(k);
        let next = &y[k + 1];
        let nodes: Vec<(f64, Vec<f64>, bool)> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let alpha: f64 = trans.row(i).iter().zip(next).map(|(p, v)| p * v).sum();
                let mut beta = vec![0.0; q];
                for (j, v) in next.iter().enumerate() {
                    for (b, m) in beta.iter_mut().zip(pi.get(i, j)) {
                        *b += v * m;
                    }
                }
                for b in &mut beta {
                    *b /= dt;
                }
                let x = grid.point(i);
                let (f, cl) = problem.driver.eval(t, x, alpha, &beta);
                let c = alpha + dt * f;
                let v = if problem.obstacle_enabled {
                    problem.obstacle.value(t, x).max(c)
                } else {
                    c
                };
                (v, beta, cl)
            })
            .collect();
        calls += nodes.len();
        let mut layer = Vec::with_capacity(nodes.len());
        let mut zl = Vec::with_capacity(nodes.len() * q);
        for (i, (v, beta, cl)) in nodes.into_iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::numeric(format!("value is not finite at (k={k}, i={i})")));
            }
            clamped += cl as usize;
            layer.push(v);
            zl.extend(beta);
        }
        y[k] = layer;
        z[k] = zl;
    }
    if clamped > 0 {
        warnings.push(format!("{clamped} nodes with nonpositive volatility: 1/sigma terms dropped"));
    }
    Ok(SolverSolution {
        price: y[0][0],
        y,
        z,
        driver_calls: calls,
        warnings,
    })
}

/// `(N2^2 y2 - N1^2 y1) / (N2^2 - N1^2)`.
pub fn romberg_extrapolate(y_n1: f64, y_n2: f64, n1: usize, n2: usize) -> Result<f64> {
    if n1 == n2 {
        return Err(Error::invalid("extrapolation needs two different grid sizes"));
    }
    let (a, b) = ((n1 as f64).powi(2), (n2 as f64).powi(2));
    Ok((b * y_n2 - a * y_n1) / (b - a))
}

/// Solution with build and solve wall-clock times.
#[derive(Debug, Clone)]
pub struct PriceReport {
    pub solution: SolverSolution,
    pub tree_meta: TreeMeta,
    pub build_seconds: f64,
    pub solve_seconds: f64,
}

impl PriceReport {
    pub fn price(&self) -> f64 {
        self.solution.price
    }
}

/// Builds the tree for `method` and solves `problem` on it.
pub fn price(
    model: &EulerModel,
    problem: &RbsdeProblem,
    method: TreeMethod,
    sizes: &[usize],
    cfg: &BuildConfig,
) -> Result<PriceReport> {
    let t0 = Instant::now();
    let tree = build_tree(model, method, sizes, cfg)?;
    let build_seconds = t0.elapsed().as_secs_f64();
    let (solution, solve_seconds) = timed_solve(&tree, problem)?;
    Ok(PriceReport {
        solution,
        tree_meta: tree.meta().clone(),
        build_seconds,
        solve_seconds,
    })
}

pub(crate) fn timed_solve(tree: &QuantizationTree, problem: &RbsdeProblem) -> Result<(SolverSolution, f64)> {
    let t0 = Instant::now();
    let s = solve_bdpp(tree, problem)?;
    Ok((s, t0.elapsed().as_secs_f64()))
}
