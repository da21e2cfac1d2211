//! Shared fixtures for the benchmarks.

use quantree::harness::bidask_bs_model;
use quantree::tree::build_recursive_tree_1d;
use quantree::{BuildConfig, EulerModel, GaussianMixture, QuantizationTree};

/// Black-Scholes bid-ask model with `steps` Euler steps.
pub fn bs_model(steps: usize) -> EulerModel {
    bidask_bs_model(steps).expect("valid model")
}

/// One-step mixture law seen when quantizing step 1 from an `n` point grid.
pub fn step_mixture(n: usize) -> GaussianMixture {
    let m = bs_model(2);
    let tree = build_recursive_tree_1d(&m, &[n; 2], &BuildConfig::default()).expect("tree");
    m.mixture_law(1, tree.grid(1)).expect("mixture")
}

pub fn recursive_tree(steps: usize, n: usize) -> (EulerModel, QuantizationTree) {
    let m = bs_model(steps);
    let t = build_recursive_tree_1d(&m, &vec![n; steps], &BuildConfig::default()).expect("tree");
    (m, t)
}
