use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::quantizer::grid::Grid;
use crate::quantizer::io::{read_grid_csv, write_grid_csv};
use crate::quantizer::kmeans::{weighted_kmeans, KmeansConfig};
use crate::quantizer::lloyd::{lloyd_mixture_1d, LloydConfig};
use crate::quantizer::mixture::{AtomCloud, GaussianMixture};

/// Sample size behind two-dimensional normal grids.
pub const NORMAL_2D_SAMPLES: usize = 1_000_000;

/// Quadratic optimal grid of `N(0, I_q)` for `q` in {1, 2}, with cell weights.
///
/// `q = 1` is exact Lloyd and ignores the seed; `q = 2` runs k-means on a
/// seeded equal-weight sample, weights being the sample cell frequencies.
pub fn stationary_normal_grid(q: usize, n: usize, seed: u64) -> Result<Grid> {
    stationary_normal_grid_sampled(q, n, seed, NORMAL_2D_SAMPLES)
}

/// As [`stationary_normal_grid`] with an explicit 2-d sample size.
pub fn stationary_normal_grid_sampled(q: usize, n: usize, seed: u64, samples: usize) -> Result<Grid> {
    if n == 0 {
        return Err(Error::invalid("grid size must be at least 1"));
    }
    match q {
        1 => {
            let cfg = LloydConfig {
                tol: 1e-12,
                max_iter: 10_000,
                newton: true,
            };
            let out = lloyd_mixture_1d(&GaussianMixture::standard(), n, &cfg)?;
            symmetrised(out.grid)
        }
        2 => {
            if samples < n {
                return Err(Error::invalid(format!("{samples} samples cannot support {n} points")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<f64> = (0..2 * samples).map(|_| StandardNormal.sample(&mut rng)).collect();
            let cloud = AtomCloud::uniform(2, pts)?;
            let out = weighted_kmeans(&cloud, n, &KmeansConfig::default())?;
            Ok(out.grid)
        }
        _ => Err(Error::invalid(format!("normal grids are available for q in {{1, 2}}, got {q}"))),
    }
}

/// Averages mirror pairs so the 1-d grid is exactly symmetric about 0.
fn symmetrised(grid: Grid) -> Result<Grid> {
    let x = grid.coords();
    let w = grid.weights().expect("lloyd sets weights");
    let n = x.len();
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n {
        let j = n - 1 - i;
        xs[i] = 0.5 * (x[i] - x[j]);
        ws[i] = 0.5 * (w[i] + w[j]);
    }
    let total: f64 = ws.iter().sum();
    for v in &mut ws {
        *v /= total;
    }
    Grid::from_1d(xs)?.with_weights(ws)
}

/// On-disk cache of normal grids, one CSV per `(q, N, seed)` named
/// `normal_q{q}_n{N}_s{seed}.csv`.
#[derive(Debug, Clone)]
pub struct NormalGridCache {
    dir: PathBuf,
}

impl NormalGridCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        NormalGridCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, q: usize, n: usize, seed: u64) -> PathBuf {
        self.dir.join(format!("normal_q{q}_n{n}_s{seed}.csv"))
    }

    /// Loads the cached grid, computing and storing it first if absent.
    pub fn get(&self, q: usize, n: usize, seed: u64) -> Result<Grid> {
        let path = self.path_for(q, n, seed);
        if path.exists() {
            return read_grid_csv(&path);
        }
        let grid = stationary_normal_grid(q, n, seed)?;
        write_grid_csv(&path, &grid)?;
        Ok(grid)
    }
}
