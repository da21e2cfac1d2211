use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::quantizer::grid::{sq_dist, Grid};
use crate::quantizer::lloyd::cell_stats;
use crate::quantizer::mixture::{AtomCloud, GaussianMixture};

/// Default Monte Carlo sample count for non-closed-form distortions.
pub const DEFAULT_MC_SAMPLES: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionEstimate {
    /// `e_p = (E|X - proj(X)|^p)^(1/p)`.
    pub value: f64,
    /// Zero for the closed form.
    pub std_error: f64,
}

/// Quantization error of `grid` for the mixture law. The quadratic 1-d case is
/// exact; other orders use [`distortion_mc`] with the default sample size.
pub fn distortion(grid: &Grid, mix: &GaussianMixture, p: f64) -> Result<DistortionEstimate> {
    if grid.is_empty() {
        return Err(Error::invalid("empty grid"));
    }
    if grid.dim() != 1 {
        return Err(Error::invalid("mixture laws are scalar; grid must be 1-d"));
    }
    if p == 2.0 {
        let g2 = cell_stats(mix, grid.coords()).distortion();
        return Ok(DistortionEstimate {
            value: g2.sqrt(),
            std_error: 0.0,
        });
    }
    distortion_mc(grid, mix, p, DEFAULT_MC_SAMPLES, 0)
}

/// Monte Carlo estimate of `e_p`; the standard error follows by the delta method.
pub fn distortion_mc(grid: &Grid, mix: &GaussianMixture, p: f64, samples: usize, seed: u64) -> Result<DistortionEstimate> {
    if grid.is_empty() {
        return Err(Error::invalid("empty grid"));
    }
    if !(p >= 1.0) {
        return Err(Error::invalid(format!("distortion order must be >= 1, got {p}")));
    }
    if samples < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let comps = mix.components();
    let mut cum = Vec::with_capacity(comps.len());
    let mut acc = 0.0;
    for c in comps {
        acc += c.weight;
        cum.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..samples {
        let u: f64 = rng.random::<f64>() * acc;
        let c = cum.partition_point(|&v| v <= u).min(comps.len() - 1);
        let e: f64 = rng.sample(StandardNormal);
        let x = comps[c].law.at(e);
        let j = grid.nearest(&[x]);
        let v = (x - grid.coords()[j]).abs().powf(p);
        s1 += v;
        s2 += v * v;
    }
    let nf = samples as f64;
    let g = s1 / nf;
    let var = (s2 / nf - g * g).max(0.0) * nf / (nf - 1.0);
    let se_g = (var / nf).sqrt();
    let value = g.powf(1.0 / p);
    let std_error = if g > 0.0 { se_g * value / (p * g) } else { 0.0 };
    Ok(DistortionEstimate { value, std_error })
}

/// Quadratic distortion `sum_a w_a min_j |x_a - c_j|^2` of a discrete law.
pub fn cloud_distortion(grid: &Grid, cloud: &AtomCloud) -> Result<f64> {
    if grid.dim() != cloud.dim() {
        return Err(Error::invalid("grid and cloud dimensions differ"));
    }
    Ok((0..cloud.len())
        .map(|a| {
            let x = cloud.point(a);
            cloud.weights()[a] * sq_dist(x, grid.point(grid.nearest(x)))
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn closed_forms() {
        let mix = GaussianMixture::standard();
        let one = Grid::from_1d(vec![0.0]).unwrap();
        assert_abs_diff_eq!(distortion(&one, &mix, 2.0).unwrap().value, 1.0, epsilon = 1e-15);
        let e = 0.7978845608;
        let two = Grid::from_1d(vec![-e, e]).unwrap();
        assert_abs_diff_eq!(distortion(&two, &mix, 2.0).unwrap().value, 0.6028102750, epsilon = 1e-9);
    }

    #[test]
    fn mc_agrees_with_closed_form() {
        let mix = GaussianMixture::standard();
        let g = Grid::from_1d(vec![-1.0, 0.0, 1.0]).unwrap();
        let exact = distortion(&g, &mix, 2.0).unwrap().value;
        let mc = distortion_mc(&g, &mix, 2.0, 1_000_000, 11).unwrap();
        assert!((mc.value - exact).abs() <= 3.0 * mc.std_error, "{mc:?} vs {exact}");
        assert!(distortion(&Grid::from_1d(vec![0.0]).unwrap(), &mix, 1.0).unwrap().value > 0.79);
    }
}
