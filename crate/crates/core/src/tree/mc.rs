use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::EulerModel;
use crate::quantizer::{Grid, NearestIndex};
use crate::tree::{Matrix, NoiseMoments};

/// Paths handled by one work unit; fixes the summation order.
const CHUNK: usize = 4096;
/// Work units reduced together before folding into the totals.
const BATCH: usize = 16;

/// What a simulated path does after each projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum McDynamics {
    /// Paths follow the Euler scheme; grids only label the states.
    #[default]
    Euler,
    /// Each step restarts from the grid point the path was projected to.
    Projected,
}

/// Empirical transitions, noise moments and marginals along a grid sequence.
#[derive(Debug, Clone)]
pub struct McEstimate {
    pub transitions: Vec<Matrix>,
    pub noise_moments: Vec<NoiseMoments>,
    /// Empirical conditional means of `dt |e|^2` per transition, for standard errors.
    pub noise_second_moments: Vec<Matrix>,
    /// Visits of each source cell.
    pub row_counts: Vec<Vec<u64>>,
    /// Empirical marginal of each grid.
    pub weights: Vec<Vec<f64>>,
    /// `(k, i)` rows never visited, set to the deterministic image.
    pub unvisited: Vec<(usize, usize)>,
    pub paths: usize,
}

enum Projector<'a> {
    Sorted(&'a Grid),
    Index(NearestIndex),
}

impl Projector<'_> {
    fn project(&self, x: &[f64]) -> usize {
        match self {
            Projector::Sorted(g) => g.nearest(x),
            Projector::Index(ix) => ix.nearest(x),
        }
    }
}

/// Cell indices and noise of the paths of one work unit, path-major.
struct ChunkPaths {
    cells: Vec<u32>,
    noise: Vec<f64>,
}

/// Monte Carlo estimate of `p_ij`, `pi_ij` and the marginal weights on given
/// grids. Path `m` draws its noise from stream `m` of a generator seeded with
/// `seed`, so the result does not depend on the thread count.
pub fn mc_companion_estimator(
    model: &EulerModel,
    grids: &[Grid],
    n_paths: usize,
    seed: u64,
    dynamics: McDynamics,
) -> Result<McEstimate> {
    let n = model.steps();
    if grids.len() != n + 1 {
        return Err(Error::invalid(format!("{} grids given for {n} steps", grids.len())));
    }
    if n_paths == 0 {
        return Err(Error::invalid("Monte Carlo needs at least one path"));
    }
    let d = model.dim();
    let q = model.noise_dim();
    if grids.iter().any(|g| g.dim() != d) {
        return Err(Error::invalid("grid and model dimensions differ"));
    }
    let projectors: Vec<Projector> = grids
        .iter()
        .map(|g| {
            if d == 1 {
                Projector::Sorted(g)
            } else {
                let pts: Vec<f64> = g.coords().to_vec();
                Projector::Index(NearestIndex::new(d, &pts))
            }
        })
        .collect();
    let sq = model.dt().sqrt();
    let dt = model.dt();
    let start = grids[0].nearest(model.x0());

    let run_chunk = |c: usize| -> ChunkPaths {
        let paths = ((c + 1) * CHUNK).min(n_paths) - c * CHUNK;
        let mut out = ChunkPaths {
            cells: Vec::with_capacity(paths * n),
            noise: Vec::with_capacity(paths * n * q),
        };
        let mut x = vec![0.0; d];
        let mut y = vec![0.0; d];
        let mut eps = vec![0.0; q];
        for m in c * CHUNK..c * CHUNK + paths {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(m as u64);
            x.copy_from_slice(match dynamics {
                McDynamics::Euler => model.x0(),
                McDynamics::Projected => grids[0].point(start),
            });
            for k in 0..n {
                for e in eps.iter_mut() {
                    *e = StandardNormal.sample(&mut rng);
                }
                model.step_into(k, &x, &eps, &mut y);
                let j = projectors[k + 1].project(&y);
                out.cells.push(j as u32);
                out.noise.extend_from_slice(&eps);
                match dynamics {
                    McDynamics::Euler => x.copy_from_slice(&y),
                    McDynamics::Projected => x.copy_from_slice(grids[k + 1].point(j)),
                }
            }
        }
        out
    };

    let shape: Vec<usize> = grids.windows(2).map(|w| w[0].len() * w[1].len()).collect();
    let mut counts: Vec<Vec<u32>> = shape.iter().map(|&s| vec![0; s]).collect();
    let mut sums: Vec<Vec<f64>> = shape.iter().map(|&s| vec![0.0; s * q]).collect();
    let mut squares: Vec<Vec<f64>> = shape.iter().map(|&s| vec![0.0; s]).collect();
    let chunks = n_paths.div_ceil(CHUNK);
    for first in (0..chunks).step_by(BATCH) {
        let parts: Vec<ChunkPaths> = (first..(first + BATCH).min(chunks)).into_par_iter().map(run_chunk).collect();
        // folded in path order, so sums do not depend on scheduling
        for part in &parts {
            for (p, cells) in part.cells.chunks(n).enumerate() {
                let mut i = start;
                for (k, &j) in cells.iter().enumerate() {
                    let cell = i * grids[k + 1].len() + j as usize;
                    counts[k][cell] += 1;
                    let e = &part.noise[(p * n + k) * q..(p * n + k + 1) * q];
                    let mut e2 = 0.0;
                    for (r, v) in e.iter().enumerate() {
                        sums[k][cell * q + r] += sq * v;
                        e2 += v * v;
                    }
                    squares[k][cell] += dt * e2;
                    i = j as usize;
                }
            }
        }
    }

    let mut transitions = Vec::with_capacity(n);
    let mut noise_moments = Vec::with_capacity(n);
    let mut noise_second_moments = Vec::with_capacity(n);
    let mut row_counts = Vec::with_capacity(n);
    let mut w0 = vec![0.0; grids[0].len()];
    w0[start] = 1.0;
    let mut weights = vec![w0];
    let mut unvisited = Vec::new();
    let zero = vec![0.0; q];
    for k in 0..n {
        let (rows, cols) = (grids[k].len(), grids[k + 1].len());
        let mut t = Matrix::zeros(rows, cols);
        let mut pi = NoiseMoments::zeros(rows, cols, q);
        let mut s2 = Matrix::zeros(rows, cols);
        let mut visits = vec![0u64; rows];
        let mut next_w = vec![0.0; cols];
        for i in 0..rows {
            let c = &counts[k][i * cols..(i + 1) * cols];
            let ni: u64 = c.iter().map(|&v| v as u64).sum();
            visits[i] = ni;
            if ni == 0 {
                unvisited.push((k, i));
                let j = projectors[k + 1].project(&model.euler_step(k, grids[k].point(i), &zero));
                t.row_mut(i)[j] = 1.0;
                continue;
            }
            let inv = 1.0 / ni as f64;
            for j in 0..cols {
                let cell = i * cols + j;
                t.row_mut(i)[j] = c[j] as f64 * inv;
                s2.row_mut(i)[j] = squares[k][cell] * inv;
                for (r, v) in pi.get_mut(i, j).iter_mut().enumerate() {
                    *v = sums[k][cell * q + r] * inv;
                }
                next_w[j] += c[j] as f64;
            }
        }
        for w in &mut next_w {
            *w /= n_paths as f64;
        }
        transitions.push(t);
        noise_moments.push(pi);
        noise_second_moments.push(s2);
        row_counts.push(visits);
        weights.push(next_w);
    }
    Ok(McEstimate {
        transitions,
        noise_moments,
        noise_second_moments,
        row_counts,
        weights,
        unvisited,
        paths: n_paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;

    #[test]
    fn zero_volatility_gives_indicators() {
        let m = EulerModel::new(ModelKind::BlackScholesEuler { mu: 0.1, sigma: 1e-300 }, 1.0, 3, vec![1.0]).unwrap();
        let grids = vec![
            Grid::singleton(&[1.0]).unwrap(),
            Grid::from_1d(vec![0.5, 1.0, 1.5]).unwrap(),
            Grid::from_1d(vec![1.0, 2.0]).unwrap(),
            Grid::from_1d(vec![0.0, 1.1]).unwrap(),
        ];
        let est = mc_companion_estimator(&m, &grids, 5000, 7, McDynamics::Euler).unwrap();
        for t in &est.transitions {
            for v in t.data() {
                assert!(*v == 0.0 || *v == 1.0);
            }
        }
        assert_eq!(est.unvisited.len(), 2 + 1);
    }

    #[test]
    fn deterministic_and_consistent() {
        let m = EulerModel::new(ModelKind::BlackScholesEuler { mu: 0.05, sigma: 0.2 }, 0.25, 2, vec![100.0]).unwrap();
        let grids = vec![
            Grid::singleton(&[100.0]).unwrap(),
            Grid::from_1d(vec![95.0, 100.0, 105.0]).unwrap(),
            Grid::from_1d(vec![92.0, 100.0, 108.0]).unwrap(),
        ];
        let a = mc_companion_estimator(&m, &grids, 20_000, 3, McDynamics::Euler).unwrap();
        let b = mc_companion_estimator(&m, &grids, 20_000, 3, McDynamics::Euler).unwrap();
        assert_eq!(a.transitions, b.transitions);
        assert_eq!(a.noise_moments, b.noise_moments);
        let total: f64 = a.weights[2].iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        for t in &a.transitions {
            for i in 0..t.rows() {
                assert!((t.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
