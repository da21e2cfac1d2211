use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::EulerModel;
use crate::quadrature::pdf;
use crate::quantizer::{greedy_sequence_1d, lloyd_mixture_1d, GaussianMixture, Grid, TailCdf};
use crate::tree::{base_meta, check_sizes, propagate, BuildConfig, Matrix, NoiseMoments, QuantizationTree, TreeMeta, TreeMethod};

/// Recursive quantization: each grid is the Lloyd quantizer of the one-step
/// mixture law of the previous weighted grid. Transitions and noise moments
/// are closed-form Gaussian cell masses and partial moments.
pub fn build_recursive_tree_1d(model: &EulerModel, sizes: &[usize], cfg: &BuildConfig) -> Result<QuantizationTree> {
    build_recursive(model, sizes, cfg, TreeMethod::Recursive, |mix, n| {
        let out = lloyd_mixture_1d(mix, n, &cfg.lloyd)?;
        Ok((out.grid, out.converged))
    })
}

/// Recursive tree whose grids are greedy sequences of the one-step mixture.
pub fn build_greedy_recursive_tree(model: &EulerModel, sizes: &[usize], cfg: &BuildConfig) -> Result<QuantizationTree> {
    build_recursive(model, sizes, cfg, TreeMethod::GreedyRecursive, |mix, n| {
        Ok((greedy_sequence_1d(mix, n)?.grid, true))
    })
}

fn build_recursive<F>(model: &EulerModel, sizes: &[usize], cfg: &BuildConfig, method: TreeMethod, quantize: F) -> Result<QuantizationTree>
where
    F: Fn(&GaussianMixture, usize) -> Result<(Grid, bool)>,
{
    if model.dim() != 1 || model.noise_dim() != 1 {
        return Err(Error::invalid(format!("{method} trees need a scalar model")));
    }
    check_sizes(sizes, model.steps())?;
    let mut meta = base_meta(method, model, cfg);
    meta.transition_mode = "closed_form".into();
    let mut grids = vec![Grid::singleton(model.x0())?];
    let mut transitions = Vec::with_capacity(sizes.len());
    let mut moments = Vec::with_capacity(sizes.len());
    for (k, &n_next) in sizes.iter().enumerate() {
        let mix = model.mixture_law(k, &grids[k])?;
        let (mut next, converged) = quantize(&mix, n_next)?;
        if !converged {
            meta.unconverged_steps.push(k + 1);
            meta.warnings.push(format!("quantizer for step {} stopped before tolerance", k + 1));
        }
        let (t, p) = closed_form_layer(model, k, &grids[k], &next, &mut meta)?;
        next.set_weights_unchecked(propagate(grids[k].weights().unwrap(), &t));
        grids.push(next);
        transitions.push(t);
        moments.push(p);
    }
    QuantizationTree::new(model.dt(), 1, grids, transitions, moments, meta)
}

/// `p_ij = P(E_k(x_i, e) in C_j)` and `pi_ij = sqrt(dt) E[e 1{E_k(x_i, e) in C_j}]`.
pub(crate) fn closed_form_layer(
    model: &EulerModel,
    k: usize,
    from: &Grid,
    to: &Grid,
    meta: &mut TreeMeta,
) -> Result<(Matrix, NoiseMoments)> {
    let b = to.midpoints();
    let n_to = to.len();
    let sq = model.dt().sqrt();
    let rows: Vec<(Vec<f64>, Vec<f64>, bool)> = from
        .coords()
        .par_iter()
        .map(|&x| {
            let law = model.step_law(k, x)?;
            let mut edges = Vec::with_capacity(n_to + 1);
            edges.push(f64::NEG_INFINITY);
            edges.extend(b.iter().map(|&v| law.noise_bound(v)));
            edges.push(f64::INFINITY);
            let tails: Vec<TailCdf> = edges.iter().map(|&e| TailCdf::at(e)).collect();
            let dens: Vec<f64> = edges.iter().map(|&e| if e.is_finite() { pdf(e) } else { 0.0 }).collect();
            let mut p = vec![0.0; n_to];
            let mut pi = vec![0.0; n_to];
            for j in 0..n_to {
                p[j] = tails[j].mass_to(&tails[j + 1]);
                pi[j] = sq * (dens[j] - dens[j + 1]);
            }
            Ok((p, pi, law.is_degenerate()))
        })
        .collect::<Result<_>>()?;
    let mut t = Matrix::zeros(from.len(), n_to);
    let mut m = NoiseMoments::zeros(from.len(), n_to, 1);
    for (i, (p, pi, degenerate)) in rows.into_iter().enumerate() {
        if degenerate {
            meta.warnings.push(format!("step {k} row {i}: zero diffusion, row is a point mass"));
        }
        t.row_mut(i).copy_from_slice(&p);
        m.row_mut(i).copy_from_slice(&pi);
    }
    Ok((t, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;
    use crate::quantizer::stationarity_residual;
    use approx::assert_abs_diff_eq;

    fn bs(n: usize) -> EulerModel {
        EulerModel::new(ModelKind::BlackScholesEuler { mu: 0.05, sigma: 0.2 }, 0.25, n, vec![100.0]).unwrap()
    }

    #[test]
    fn single_cell_tree() {
        let m = bs(1);
        let t = build_recursive_tree_1d(&m, &[1], &BuildConfig::default()).unwrap();
        assert_abs_diff_eq!(t.grid(1).coords()[0], 100.0 + 0.25 * 5.0, epsilon = 1e-9);
        assert_abs_diff_eq!(t.transition(0).get(0, 0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.noise_moment(0).get(0, 0)[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn bs_tree_integrity() {
        let m = bs(20);
        let t = build_recursive_tree_1d(&m, &[100; 20], &BuildConfig::default()).unwrap();
        assert!(t.max_row_sum_error() <= 1e-9);
        assert!(t.max_kolmogorov_error() <= 1e-9);
        assert!(t.max_noise_sum() <= 1e-7 * m.dt().sqrt());
        for k in 0..20 {
            let mix = m.mixture_law(k, t.grid(k)).unwrap();
            assert!(stationarity_residual(t.grid(k + 1), &mix) <= 1e-8, "step {k}");
        }
        assert!(t.meta().unconverged_steps.is_empty());
    }

    #[test]
    fn greedy_recursive_single() {
        let m = bs(3);
        let a = build_greedy_recursive_tree(&m, &[1; 3], &BuildConfig::default()).unwrap();
        let b = build_recursive_tree_1d(&m, &[1; 3], &BuildConfig::default()).unwrap();
        for k in 0..=3 {
            assert_abs_diff_eq!(a.grid(k).coords()[0], b.grid(k).coords()[0], epsilon = 1e-9);
        }
    }

    #[test]
    fn rejects_2d_and_bad_sizes() {
        let m2 = EulerModel::new(ModelKind::CorrelatedBs2d { r: 0.0, sigma: 0.2, rho: 0.0 }, 1.0, 2, vec![40.0, 36.0]).unwrap();
        assert!(build_recursive_tree_1d(&m2, &[5, 5], &BuildConfig::default()).is_err());
        assert!(build_recursive_tree_1d(&bs(2), &[5], &BuildConfig::default()).is_err());
        assert!(build_recursive_tree_1d(&bs(2), &[5, 0], &BuildConfig::default()).is_err());
    }
}
