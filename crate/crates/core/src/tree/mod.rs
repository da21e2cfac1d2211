//! Quantization trees: grids per step, transition matrices and noise moments.

mod hybrid;
mod io;
mod marginal;
mod mc;
mod recursive;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::quantizer::{Grid, KmeansConfig, LloydConfig};

pub use hybrid::build_hybrid_tree;
pub use io::{load_tree, save_tree};
pub use marginal::{build_greedy_product_tree, build_greedy_tree, build_marginal_tree};
pub use mc::{mc_companion_estimator, McDynamics, McEstimate};
pub use recursive::{build_greedy_recursive_tree, build_recursive_tree_1d};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged matrix rows"));
        }
        let n = rows.len();
        Ok(Matrix {
            rows: n,
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Matrix of `q`-vectors `pi_ij`, row-major with the vector index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMoments {
    rows: usize,
    cols: usize,
    q: usize,
    data: Vec<f64>,
}

impl NoiseMoments {
    pub fn zeros(rows: usize, cols: usize, q: usize) -> Self {
        NoiseMoments {
            rows,
            cols,
            q,
            data: vec![0.0; rows * cols * q],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn get(&self, i: usize, j: usize) -> &[f64] {
        let o = (i * self.cols + j) * self.q;
        &self.data[o..o + self.q]
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let o = (i * self.cols + j) * self.q;
        &mut self.data[o..o + self.q]
    }

    /// The `cols * q` values of row `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.cols * self.q;
        &self.data[i * w..(i + 1) * w]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let w = self.cols * self.q;
        &mut self.data[i * w..(i + 1) * w]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TreeMethod {
    /// Recursive quantization (Lloyd on the one-step mixture).
    Recursive,
    /// Recursive quantization with a quantized Gaussian innovation.
    Hybrid,
    /// Marginal optimal grids.
    Optimal,
    /// Marginal greedy grids (greedy product grids in 2-d).
    Greedy,
    /// Recursive quantization with greedy grids.
    GreedyRecursive,
}

impl TreeMethod {
    pub const ALL: [TreeMethod; 5] = [
        TreeMethod::Recursive,
        TreeMethod::Hybrid,
        TreeMethod::Optimal,
        TreeMethod::Greedy,
        TreeMethod::GreedyRecursive,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TreeMethod::Recursive => "rq",
            TreeMethod::Hybrid => "hrq",
            TreeMethod::Optimal => "oq",
            TreeMethod::Greedy => "gq",
            TreeMethod::GreedyRecursive => "grq",
        }
    }
}

impl fmt::Display for TreeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TreeMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TreeMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown method {s:?} (expected rq, hrq, oq, gq or grq)")))
    }
}

/// How marginal trees get their transition weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum TransitionMode {
    /// Gaussian quadrature of the joint cell probabilities (Black-Scholes only).
    #[default]
    ExactQuadrature,
    /// `p_ij = g_j(z_i)`, the conditional law evaluated at the grid point.
    GApprox,
    /// Path simulation with nearest-neighbour projection.
    MonteCarlo,
}

impl TransitionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TransitionMode::ExactQuadrature => "exact",
            TransitionMode::GApprox => "gapprox",
            TransitionMode::MonteCarlo => "mc",
        }
    }
}

impl FromStr for TransitionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(TransitionMode::ExactQuadrature),
            "gapprox" => Ok(TransitionMode::GApprox),
            "mc" => Ok(TransitionMode::MonteCarlo),
            other => Err(Error::invalid(format!(
                "unknown transition mode {other:?} (expected exact, gapprox or mc)"
            ))),
        }
    }
}

/// Knobs shared by all builders.
#[derive(Debug, Clone)]
pub struct BuildConfig {
    pub lloyd: LloydConfig,
    pub kmeans: KmeansConfig,
    pub legendre_order: usize,
    pub laguerre_order: usize,
    pub transition_mode: TransitionMode,
    /// Paths for every Monte Carlo companion estimate.
    pub mc_paths: usize,
    pub seed: u64,
    /// Size of the quantized innovation in hybrid trees.
    pub noise_grid_size: usize,
    /// Directory caching normal grids; `None` recomputes them.
    pub grid_cache: Option<PathBuf>,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            lloyd: LloydConfig::default(),
            kmeans: KmeansConfig::default(),
            legendre_order: crate::quadrature::DEFAULT_LEGENDRE_ORDER,
            laguerre_order: crate::quadrature::DEFAULT_LAGUERRE_ORDER,
            transition_mode: TransitionMode::default(),
            mc_paths: 1_000_000,
            seed: 0,
            noise_grid_size: 1000,
            grid_cache: None,
        }
    }
}

/// Provenance and diagnostics of a tree build.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TreeMeta {
    pub method: String,
    pub model: String,
    pub seed: u64,
    pub legendre_order: usize,
    pub laguerre_order: usize,
    pub transition_mode: String,
    pub mc_paths: usize,
    pub noise_grid_size: usize,
    /// Steps whose quantizer optimization stopped without reaching tolerance.
    pub unconverged_steps: Vec<usize>,
    /// Monte Carlo rows never visited, replaced by the deterministic image.
    pub unvisited_rows: Vec<(usize, usize)>,
    pub warnings: Vec<String>,
}

/// Grids `Gamma_0..Gamma_n` with `p_ij^k` and `pi_ij^k` for `k < n`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizationTree {
    dim: usize,
    noise_dim: usize,
    dt: f64,
    grids: Vec<Grid>,
    transitions: Vec<Matrix>,
    noise_moments: Vec<NoiseMoments>,
    meta: TreeMeta,
}

impl QuantizationTree {
    pub fn new(
        dt: f64,
        noise_dim: usize,
        grids: Vec<Grid>,
        transitions: Vec<Matrix>,
        noise_moments: Vec<NoiseMoments>,
        meta: TreeMeta,
    ) -> Result<Self> {
        if grids.len() < 2 {
            return Err(Error::invalid("a tree needs at least two layers"));
        }
        if !(dt > 0.0) {
            return Err(Error::invalid("time step must be positive"));
        }
        let n = grids.len() - 1;
        if transitions.len() != n || noise_moments.len() != n {
            return Err(Error::invalid(format!(
                "{} grids need {n} transition and noise matrices, got {} and {}",
                grids.len(),
                transitions.len(),
                noise_moments.len()
            )));
        }
        let dim = grids[0].dim();
        if grids.iter().any(|g| g.dim() != dim || g.weights().is_none()) {
            return Err(Error::invalid("tree grids must share a dimension and carry weights"));
        }
        for k in 0..n {
            let (r, c) = (grids[k].len(), grids[k + 1].len());
            let t = &transitions[k];
            let p = &noise_moments[k];
            if t.rows() != r || t.cols() != c || p.rows() != r || p.cols() != c || p.q() != noise_dim {
                return Err(Error::invalid(format!("layer {k} matrices do not match grid sizes {r} x {c}")));
            }
        }
        Ok(QuantizationTree {
            dim,
            noise_dim,
            dt,
            grids,
            transitions,
            noise_moments,
            meta,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    /// Number of time steps `n`.
    pub fn steps(&self) -> usize {
        self.grids.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn grid(&self, k: usize) -> &Grid {
        &self.grids[k]
    }

    pub fn grids(&self) -> &[Grid] {
        &self.grids
    }

    pub fn transition(&self, k: usize) -> &Matrix {
        &self.transitions[k]
    }

    pub fn noise_moment(&self, k: usize) -> &NoiseMoments {
        &self.noise_moments[k]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.grids.iter().map(Grid::len).collect()
    }

    pub fn meta(&self) -> &TreeMeta {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut TreeMeta {
        &mut self.meta
    }

    /// Largest `|sum_j p_ij - 1|` over all rows.
    pub fn max_row_sum_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for t in &self.transitions {
            for i in 0..t.rows() {
                let s: f64 = t.row(i).iter().sum();
                worst = worst.max((s - 1.0).abs());
            }
        }
        worst
    }

    /// Largest gap between stored weights and `sum_i p_i p_ij` propagated one step.
    pub fn max_kolmogorov_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.steps() {
            let prop = propagate(self.grids[k].weights().unwrap(), &self.transitions[k]);
            let stored = self.grids[k + 1].weights().unwrap();
            for (a, b) in prop.iter().zip(stored) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }

    /// Largest norm of `sum_j pi_ij` over all rows.
    pub fn max_noise_sum(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for m in &self.noise_moments {
            for i in 0..m.rows() {
                let mut acc = vec![0.0; m.q()];
                for j in 0..m.cols() {
                    for (a, v) in acc.iter_mut().zip(m.get(i, j)) {
                        *a += v;
                    }
                }
                worst = worst.max(acc.iter().map(|v| v * v).sum::<f64>().sqrt());
            }
        }
        worst
    }
}

/// `p_j = sum_i w_i t_ij`.
pub(crate) fn propagate(w: &[f64], t: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; t.cols()];
    for (i, &wi) in w.iter().enumerate() {
        if wi == 0.0 {
            continue;
        }
        for (o, p) in out.iter_mut().zip(t.row(i)) {
            *o += wi * p;
        }
    }
    out
}

pub(crate) fn check_sizes(sizes: &[usize], steps: usize) -> Result<()> {
    if sizes.len() != steps {
        return Err(Error::invalid(format!("{} grid sizes given for {steps} steps", sizes.len())));
    }
    if let Some(k) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::invalid(format!("grid size for step {} must be at least 1", k + 1)));
    }
    Ok(())
}

pub(crate) fn base_meta(method: TreeMethod, model: &crate::models::EulerModel, cfg: &BuildConfig) -> TreeMeta {
    TreeMeta {
        method: method.as_str().to_string(),
        model: model.id().to_string(),
        seed: cfg.seed,
        legendre_order: cfg.legendre_order,
        laguerre_order: cfg.laguerre_order,
        transition_mode: String::new(),
        mc_paths: cfg.mc_paths,
        noise_grid_size: cfg.noise_grid_size,
        ..TreeMeta::default()
    }
}

/// Normal grid through the configured cache, if any.
pub(crate) fn normal_grid(q: usize, n: usize, cfg: &BuildConfig) -> Result<Grid> {
    match &cfg.grid_cache {
        Some(dir) => crate::quantizer::NormalGridCache::new(dir).get(q, n, cfg.seed),
        None => crate::quantizer::stationary_normal_grid(q, n, cfg.seed),
    }
}

/// Builds a tree with the given method.
pub fn build_tree(
    model: &crate::models::EulerModel,
    method: TreeMethod,
    sizes: &[usize],
    cfg: &BuildConfig,
) -> Result<QuantizationTree> {
    match method {
        TreeMethod::Recursive => build_recursive_tree_1d(model, sizes, cfg),
        TreeMethod::GreedyRecursive => build_greedy_recursive_tree(model, sizes, cfg),
        TreeMethod::Hybrid => build_hybrid_tree(model, sizes, cfg),
        TreeMethod::Optimal => build_marginal_tree(model, sizes, cfg),
        TreeMethod::Greedy => build_greedy_tree(model, sizes, cfg),
    }
}
