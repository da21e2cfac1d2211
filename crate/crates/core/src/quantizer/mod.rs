//! Scalar and discrete-law quantizer optimization.

mod distortion;
mod greedy;
mod grid;
pub mod io;
mod kmeans;
mod lloyd;
mod mixture;
mod nn;
mod normal_grid;

pub use distortion::{cloud_distortion, distortion, distortion_mc, DistortionEstimate, DEFAULT_MC_SAMPLES};
pub use greedy::{greedy_sequence_1d, GreedySequence};
pub use grid::{nearest_sorted_1d, Grid, WEIGHT_SUM_TOL};
pub use kmeans::{weighted_kmeans, KmeansConfig, KmeansOutcome};
pub use lloyd::{lloyd_mixture_1d, lloyd_mixture_1d_from, quantile_init, LloydConfig, LloydOutcome};
pub use mixture::{AtomCloud, Component, ComponentLaw, GaussianMixture};
pub use nn::NearestIndex;
pub use normal_grid::{stationary_normal_grid, stationary_normal_grid_sampled, NormalGridCache, NORMAL_2D_SAMPLES};

pub(crate) use lloyd::cell_stats;
pub(crate) use mixture::TailCdf;

/// Max distance from a 1-d grid point to the centroid of its cell under `mix`.
pub fn stationarity_residual(grid: &Grid, mix: &GaussianMixture) -> f64 {
    let x = grid.coords();
    let st = cell_stats(mix, x);
    lloyd::centroids(x, &st)
        .iter()
        .zip(x)
        .map(|(c, p)| (c - p).abs())
        .fold(0.0, f64::max)
}
