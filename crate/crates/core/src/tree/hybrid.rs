use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::EulerModel;
use crate::quantizer::{weighted_kmeans, AtomCloud, Grid, NearestIndex};
use crate::tree::{base_meta, check_sizes, normal_grid, propagate, BuildConfig, Matrix, NoiseMoments, QuantizationTree, TreeMethod};

/// Recursive quantization with the Gaussian innovation replaced by a
/// quantizer of `N(0, I_q)` of size `cfg.noise_grid_size`. Every expectation
/// is then a finite sum over the atoms `E_k(x_i, e_l)` with weight `p_i p_l`.
pub fn build_hybrid_tree(model: &EulerModel, sizes: &[usize], cfg: &BuildConfig) -> Result<QuantizationTree> {
    let d = model.dim();
    let q = model.noise_dim();
    if d > 2 || q > 2 {
        return Err(Error::invalid("hybrid trees support dimensions 1 and 2"));
    }
    check_sizes(sizes, model.steps())?;
    if cfg.noise_grid_size == 0 {
        return Err(Error::invalid("noise grid size must be at least 1"));
    }
    let noise = centred(normal_grid(q, cfg.noise_grid_size, cfg)?);
    let pe = noise.weights().unwrap().to_vec();
    let ne = noise.len();
    let mut meta = base_meta(TreeMethod::Hybrid, model, cfg);
    meta.transition_mode = "finite_sum".into();
    let sq = model.dt().sqrt();

    let mut grids = vec![Grid::singleton(model.x0())?];
    let mut transitions = Vec::with_capacity(sizes.len());
    let mut moments = Vec::with_capacity(sizes.len());
    for (k, &n_next) in sizes.iter().enumerate() {
        let cur = &grids[k];
        let w = cur.weights().unwrap();
        let atoms: Vec<f64> = (0..cur.len())
            .into_par_iter()
            .flat_map_iter(|i| {
                let x = cur.point(i);
                let mut row = vec![0.0; ne * d];
                for l in 0..ne {
                    model.step_into(k, x, noise.point(l), &mut row[l * d..(l + 1) * d]);
                }
                row
            })
            .collect();
        if let Some(pos) = atoms.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("step {k}: non-finite atom from source cell {}", pos / d / ne)));
        }
        // zero-weight source cells stay in the transition rows but not in the law
        let mut pts = Vec::new();
        let mut aw = Vec::new();
        for i in 0..cur.len() {
            if w[i] == 0.0 {
                continue;
            }
            for l in 0..ne {
                if pe[l] > 0.0 {
                    pts.extend_from_slice(&atoms[(i * ne + l) * d..(i * ne + l + 1) * d]);
                    aw.push(w[i] * pe[l]);
                }
            }
        }
        let total: f64 = aw.iter().sum();
        for v in &mut aw {
            *v /= total;
        }
        let cloud = AtomCloud::new(d, pts, aw)?;
        let out = weighted_kmeans(&cloud, n_next, &cfg.kmeans)?;
        if !out.converged {
            meta.unconverged_steps.push(k + 1);
            meta.warnings.push(format!("k-means for step {} stopped before tolerance", k + 1));
        }
        let mut next = out.grid;
        let index = NearestIndex::new(d, next.coords());
        let cols = next.len();
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..cur.len())
            .into_par_iter()
            .map(|i| {
                let mut p = vec![0.0; cols];
                let mut pi = vec![0.0; cols * q];
                for l in 0..ne {
                    let j = index.nearest(&atoms[(i * ne + l) * d..(i * ne + l + 1) * d]);
                    p[j] += pe[l];
                    for (r, e) in noise.point(l).iter().enumerate() {
                        pi[j * q + r] += pe[l] * sq * e;
                    }
                }
                (p, pi)
            })
            .collect();
        let mut t = Matrix::zeros(cur.len(), cols);
        let mut m = NoiseMoments::zeros(cur.len(), cols, q);
        for (i, (p, pi)) in rows.into_iter().enumerate() {
            t.row_mut(i).copy_from_slice(&p);
            m.row_mut(i).copy_from_slice(&pi);
        }
        next.set_weights_unchecked(propagate(w, &t));
        grids.push(next);
        transitions.push(t);
        moments.push(m);
    }
    QuantizationTree::new(model.dt(), q, grids, transitions, moments, meta)
}

/// Shifts a noise quantizer so its weighted mean is exactly zero.
fn centred(grid: Grid) -> Grid {
    let q = grid.dim();
    let w = grid.weights().unwrap().to_vec();
    let mut mean = vec![0.0; q];
    for (l, &p) in w.iter().enumerate() {
        for (m, v) in mean.iter_mut().zip(grid.point(l)) {
            *m += p * v;
        }
    }
    if mean.iter().all(|&m| m == 0.0) {
        return grid;
    }
    let pts: Vec<f64> = grid
        .coords()
        .chunks(q)
        .flat_map(|p| p.iter().zip(&mean).map(|(v, m)| v - m).collect::<Vec<_>>())
        .collect();
    let mut out = Grid::new(q, pts).expect("a shift keeps points distinct");
    out.set_weights_unchecked(w);
    out
}
