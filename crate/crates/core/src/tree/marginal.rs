use std::collections::HashMap;
use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::{EulerModel, ModelKind};
use crate::quadrature::{gaussian_nodes, laguerre_rule, legendre_rule};
use crate::quantizer::{greedy_sequence_1d, GaussianMixture, Grid, TailCdf};
use crate::tree::recursive::closed_form_layer;
use crate::tree::{
    base_meta, check_sizes, mc_companion_estimator, normal_grid, propagate, BuildConfig, Matrix, McDynamics,
    QuantizationTree, TransitionMode, TreeMeta, TreeMethod,
};

/// How a standard normal grid is carried to the marginal law at `t_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Mapping {
    /// `x0 exp((mu - sigma^2/2) t + sigma sqrt(t) z)`, per coordinate.
    LogNormal,
    /// `x0 + t b(x0) + sqrt(t) sigma(x0) z`.
    Affine,
}

/// Marginal tree on optimal grids: each `Gamma_k` is a quadratic optimal
/// quantizer of `N(0, I_q)` carried to the law of `X_{t_k}`.
pub fn build_marginal_tree(model: &EulerModel, sizes: &[usize], cfg: &BuildConfig) -> Result<QuantizationTree> {
    check_sizes(sizes, model.steps())?;
    let q = model.noise_dim();
    let mut cache: HashMap<usize, Grid> = HashMap::new();
    let mut z = Vec::with_capacity(sizes.len());
    for &n in sizes {
        if !cache.contains_key(&n) {
            cache.insert(n, normal_grid(q, n, cfg)?);
        }
        z.push(cache[&n].clone());
    }
    let mapping = if model.black_scholes_params().is_some() || matches!(model.kind(), ModelKind::CorrelatedBs2d { .. }) {
        Mapping::LogNormal
    } else {
        Mapping::Affine
    };
    marginal_tree(model, &z, mapping, TreeMethod::Optimal, cfg)
}

/// Marginal tree on greedy grids of `N(m_k, Sigma_k)`; in two dimensions
/// this is the greedy product tree.
pub fn build_greedy_tree(model: &EulerModel, sizes: &[usize], cfg: &BuildConfig) -> Result<QuantizationTree> {
    if model.dim() > 1 {
        return build_greedy_product_tree(model, sizes, cfg);
    }
    check_sizes(sizes, model.steps())?;
    let mut cache: HashMap<usize, Grid> = HashMap::new();
    let mut z = Vec::with_capacity(sizes.len());
    for &n in sizes {
        if !cache.contains_key(&n) {
            cache.insert(n, greedy_sequence_1d(&GaussianMixture::standard(), n)?.grid);
        }
        z.push(cache[&n].clone());
    }
    marginal_tree(model, &z, Mapping::Affine, TreeMethod::Greedy, cfg)
}

/// Two-dimensional marginal tree on greedy product grids: the `N` heaviest
/// atoms of the product of two `ceil(sqrt(N))`-point greedy sequences.
pub fn build_greedy_product_tree(model: &EulerModel, sizes: &[usize], cfg: &BuildConfig) -> Result<QuantizationTree> {
    if model.noise_dim() != 2 || model.dim() != 2 {
        return Err(Error::invalid("greedy product trees need a 2-d model with 2-d noise"));
    }
    check_sizes(sizes, model.steps())?;
    let mut cache: HashMap<usize, Grid> = HashMap::new();
    let mut z = Vec::with_capacity(sizes.len());
    for &n in sizes {
        if !cache.contains_key(&n) {
            cache.insert(n, greedy_product_grid(n)?);
        }
        z.push(cache[&n].clone());
    }
    marginal_tree(model, &z, Mapping::Affine, TreeMethod::Greedy, cfg)
}

fn greedy_product_grid(n: usize) -> Result<Grid> {
    let m = (n as f64).sqrt().ceil() as usize;
    let g = greedy_sequence_1d(&GaussianMixture::standard(), m)?.grid;
    let (x, w) = (g.coords(), g.weights().unwrap());
    let mut atoms: Vec<(usize, usize)> = (0..m).flat_map(|a| (0..m).map(move |b| (a, b))).collect();
    atoms.sort_by(|&(a1, b1), &(a2, b2)| (w[a2] * w[b2]).total_cmp(&(w[a1] * w[b1])));
    atoms.truncate(n);
    let pts = atoms.iter().flat_map(|&(a, b)| [x[a], x[b]]).collect();
    Grid::new(2, pts)
}

fn map_grid(model: &EulerModel, k: usize, z: &Grid, mapping: Mapping) -> Result<Grid> {
    let t = model.time(k);
    let x0 = model.x0();
    let d = model.dim();
    let q = model.noise_dim();
    let mut pts = Vec::with_capacity(z.len() * d);
    match (mapping, model.kind()) {
        (Mapping::LogNormal, ModelKind::CorrelatedBs2d { r, sigma, rho }) => {
            let drift = (r - 0.5 * sigma * sigma) * t;
            let s = sigma * t.sqrt();
            let c = (1.0 - rho * rho).max(0.0).sqrt();
            for p in z.points() {
                pts.push(x0[0] * (drift + s * p[0]).exp());
                pts.push(x0[1] * (drift + s * (rho * p[0] + c * p[1])).exp());
            }
        }
        (Mapping::LogNormal, _) => {
            let (mu, sigma) = model
                .black_scholes_params()
                .ok_or_else(|| Error::invalid("log-normal grids need a Black-Scholes model"))?;
            let drift = (mu - 0.5 * sigma * sigma) * t;
            let s = sigma * t.sqrt();
            pts.extend(z.coords().iter().map(|&v| x0[0] * (drift + s * v).exp()));
        }
        (Mapping::Affine, _) => {
            let mut b = vec![0.0; d];
            let mut sig = vec![0.0; d * q];
            model.drift(0.0, x0, &mut b);
            model.diffusion(0.0, x0, &mut sig);
            let st = t.sqrt();
            for p in z.points() {
                for r in 0..d {
                    let noise: f64 = (0..q).map(|c| sig[r * q + c] * p[c]).sum();
                    pts.push(x0[r] + t * b[r] + st * noise);
                }
            }
        }
    }
    if d == 1 && pts.windows(2).any(|w| !(w[1] > w[0])) {
        pts.sort_by(f64::total_cmp);
    }
    Grid::new(d, pts).map_err(|e| Error::invalid(format!("step {k} grid: {e}")))
}

fn marginal_tree(model: &EulerModel, z: &[Grid], mapping: Mapping, method: TreeMethod, cfg: &BuildConfig) -> Result<QuantizationTree> {
    let n = model.steps();
    let mut meta = base_meta(method, model, cfg);
    meta.transition_mode = cfg.transition_mode.as_str().into();
    let analytic = cfg.transition_mode != TransitionMode::MonteCarlo;
    if analytic && (model.dim() != 1 || model.black_scholes_params().is_none()) {
        return Err(Error::invalid(format!(
            "{} transitions need a scalar Black-Scholes model; use transition_mode=mc for {}",
            cfg.transition_mode.as_str(),
            model.id()
        )));
    }
    let mut grids = vec![Grid::singleton(model.x0())?];
    for k in 1..=n {
        grids.push(map_grid(model, k, &z[k - 1], mapping)?);
    }
    let mc = mc_companion_estimator(model, &grids, cfg.mc_paths, cfg.seed, McDynamics::Euler)?;
    meta.unvisited_rows = mc.unvisited.clone();
    for &(k, i) in &mc.unvisited {
        meta.warnings.push(format!("step {k} row {i} never visited by simulation"));
    }
    let transitions = match cfg.transition_mode {
        TransitionMode::MonteCarlo => mc.transitions,
        TransitionMode::GApprox => {
            let mut scratch = TreeMeta::default();
            (0..n)
                .map(|k| Ok(closed_form_layer(model, k, &grids[k], &grids[k + 1], &mut scratch)?.0))
                .collect::<Result<Vec<_>>>()?
        }
        TransitionMode::ExactQuadrature => {
            let leg = legendre_rule(cfg.legendre_order)?;
            let lag = laguerre_rule(cfg.laguerre_order)?;
            (0..n)
                .map(|k| quadrature_layer(model, k, &grids[k], &grids[k + 1], &leg, &lag))
                .collect::<Result<Vec<_>>>()?
        }
    };
    if analytic {
        for k in 0..n {
            let w = propagate(grids[k].weights().unwrap(), &transitions[k]);
            grids[k + 1].set_weights_unchecked(w);
        }
    } else {
        for (g, w) in grids.iter_mut().zip(mc.weights) {
            g.set_weights_unchecked(w);
        }
    }
    QuantizationTree::new(model.dt(), model.noise_dim(), grids, transitions, mc.noise_moments, meta)
}

/// `p_ij = pbar_ij / sum_j pbar_ij` with `pbar_ij` the Gaussian quadrature of
/// `P(X_k in C_i, E_k(X_k, e) in C_j)` over the log-normal marginal of `X_k`.
fn quadrature_layer(
    model: &EulerModel,
    k: usize,
    from: &Grid,
    to: &Grid,
    leg: &crate::quadrature::QuadratureRule,
    lag: &crate::quadrature::QuadratureRule,
) -> Result<Matrix> {
    let (mu, sigma) = model.black_scholes_params().expect("checked by caller");
    let x0 = model.x0()[0];
    let t = model.time(k);
    let drift = (mu - 0.5 * sigma * sigma) * t;
    let s = sigma * t.sqrt();
    let to_z = |b: f64| if b > 0.0 { ((b / x0).ln() - drift) / s } else { f64::NEG_INFINITY };
    let bt = to.midpoints();
    let cols = to.len();
    let g_row = |x: f64, out: &mut [f64], w: f64| -> Result<()> {
        let law = model.step_law(k, x)?;
        let mut prev = TailCdf::at(f64::NEG_INFINITY);
        for j in 0..cols {
            let next = if j + 1 < cols {
                TailCdf::at(law.noise_bound(bt[j]))
            } else {
                TailCdf::at(f64::INFINITY)
            };
            out[j] += w * prev.mass_to(&next);
            prev = next;
        }
        Ok(())
    };
    let mut mat = Matrix::zeros(from.len(), cols);
    if k == 0 || s == 0.0 {
        for i in 0..from.len() {
            g_row(from.coords()[i], mat.row_mut(i), 1.0)?;
        }
        return Ok(mat);
    }
    let bf = from.midpoints();
    let norm = 1.0 / (2.0 * PI).sqrt();
    let rows: Vec<Vec<f64>> = (0..from.len())
        .into_par_iter()
        .map(|i| {
            let lo = if i == 0 { f64::NEG_INFINITY } else { to_z(bf[i - 1]) };
            let hi = if i + 1 == from.len() { f64::INFINITY } else { to_z(bf[i]) };
            let mut row = vec![0.0; cols];
            for (z, w) in gaussian_nodes(lo, hi, leg, lag) {
                g_row(x0 * (drift + s * z).exp(), &mut row, w * norm)?;
            }
            let mass: f64 = row.iter().sum();
            if mass > 0.0 && mass.is_finite() {
                for v in &mut row {
                    *v /= mass;
                }
            } else {
                // cell too far in the tail for the rule: evaluate at the grid point
                row.iter_mut().for_each(|v| *v = 0.0);
                g_row(from.coords()[i], &mut row, 1.0)?;
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    for (i, r) in rows.into_iter().enumerate() {
        mat.row_mut(i).copy_from_slice(&r);
    }
    Ok(mat)
}
