use crate::error::{Error, Result};
use crate::quantizer::grid::Grid;
use crate::quantizer::mixture::{ComponentLaw, GaussianMixture};

/// Noise levels beyond this carry no representable Gaussian mass.
pub(crate) const NOISE_CUT: f64 = 39.0;

/// Relative slack when comparing distortions of candidate steps.
const DISTORTION_SLACK: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LloydConfig {
    /// Stop once every point is within `tol` of its cell centroid.
    pub tol: f64,
    pub max_iter: usize,
    /// Try a Newton step on the centroid map before each Lloyd step.
    pub newton: bool,
}

impl Default for LloydConfig {
    fn default() -> Self {
        LloydConfig {
            tol: 1e-10,
            max_iter: 500,
            newton: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LloydOutcome {
    /// Final grid, cell weights set to the mixture mass of each cell.
    pub grid: Grid,
    pub iterations: usize,
    /// Max distance between a point and its cell centroid at `grid`.
    pub residual: f64,
    pub converged: bool,
    pub reseeds: usize,
    /// Quadratic distortion `E|X - proj(X)|^2` after every iteration.
    pub distortion_trace: Vec<f64>,
}

impl LloydOutcome {
    pub fn distortion(&self) -> f64 {
        *self.distortion_trace.last().unwrap_or(&f64::NAN)
    }
}

/// Per-cell mixture mass, first moment, second moment about the cell's
/// point, and the mixture density at each interior boundary.
#[derive(Debug, Clone)]
pub(crate) struct CellStats {
    pub m0: Vec<f64>,
    pub m1: Vec<f64>,
    pub d2: Vec<f64>,
    pub boundary_density: Vec<f64>,
}

impl CellStats {
    pub fn distortion(&self) -> f64 {
        self.d2.iter().sum()
    }
}

/// Cells are `(b_{j-1}, b_j]` with `b` the midpoints of `x`.
pub(crate) fn cell_stats(mix: &GaussianMixture, x: &[f64]) -> CellStats {
    let n = x.len();
    let b: Vec<f64> = x.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let mut st = CellStats {
        m0: vec![0.0; n],
        m1: vec![0.0; n],
        d2: vec![0.0; n],
        boundary_density: vec![0.0; n.saturating_sub(1)],
    };
    for comp in mix.components() {
        if comp.weight == 0.0 {
            continue;
        }
        let law = &comp.law;
        let w = comp.weight;
        let (t0, t1) = active_boundaries(law, &b);
        for t in t0..t1 {
            st.boundary_density[t] += w * law.density(b[t]);
        }
        // cells j with t0 <= j <= t1 can hold mass
        let hi_cell = t1.min(n - 1);
        for j in t0..=hi_cell {
            let l = if j == 0 { f64::NEG_INFINITY } else { law.noise_bound(b[j - 1]) };
            let u = if j == n - 1 { f64::INFINITY } else { law.noise_bound(b[j]) };
            let (p, m1, m2) = law.partial_moments(l, u, x[j]);
            st.m0[j] += w * p;
            st.m1[j] += w * m1;
            st.d2[j] += w * m2;
        }
    }
    st
}

/// Boundary index range `[t0, t1)` whose noise level lies within the cut.
pub(crate) fn active_boundaries(law: &ComponentLaw, b: &[f64]) -> (usize, usize) {
    let t0 = b.partition_point(|&v| law.noise_bound(v) <= -NOISE_CUT);
    let t1 = t0 + b[t0..].partition_point(|&v| law.noise_bound(v) < NOISE_CUT);
    (t0, t1)
}

/// Quantiles of the mixture at levels `(i - 0.5) / n`.
pub fn quantile_init(mix: &GaussianMixture, n: usize) -> Vec<f64> {
    let (lo, hi) = mix.support_hint();
    let mut out = Vec::with_capacity(n);
    let mut bracket_lo = lo;
    for i in 1..=n {
        let p = (i as f64 - 0.5) / n as f64;
        let q = mix.quantile_in(p, bracket_lo, hi);
        bracket_lo = q;
        out.push(q);
    }
    make_strictly_increasing(&mut out);
    out
}

pub(crate) fn make_strictly_increasing(x: &mut [f64]) {
    for j in 1..x.len() {
        if !(x[j] > x[j - 1]) {
            let step = f64::EPSILON * 16.0 * x[j - 1].abs().max(1.0);
            x[j] = x[j - 1] + step;
        }
    }
}

/// Quadratic optimal quantizer of a scalar mixture by the Lloyd fixed point.
pub fn lloyd_mixture_1d(mix: &GaussianMixture, n: usize, cfg: &LloydConfig) -> Result<LloydOutcome> {
    if n == 0 {
        return Err(Error::invalid("grid size must be at least 1"));
    }
    lloyd_mixture_1d_from(mix, quantile_init(mix, n), cfg)
}

/// Lloyd iteration started from a given strictly increasing grid.
pub fn lloyd_mixture_1d_from(mix: &GaussianMixture, init: Vec<f64>, cfg: &LloydConfig) -> Result<LloydOutcome> {
    let n = init.len();
    if n == 0 {
        return Err(Error::invalid("grid size must be at least 1"));
    }
    if init.iter().any(|v| !v.is_finite()) || init.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("initial grid must be finite and strictly increasing"));
    }
    let support = mix.support_hint();
    let mut x = init;
    let mut st = cell_stats(mix, &x);
    let mut trace = Vec::new();
    let mut reseeds = 0;
    let mut iterations = 0;
    let mut converged = false;
    let mut residual;

    loop {
        if let Some(j) = st.m0.iter().position(|&m| !(m > f64::MIN_POSITIVE)) {
            if n > 1 && iterations < cfg.max_iter {
                reseed_empty(&mut x, j, &st, support);
                reseeds += 1;
                iterations += 1;
                st = cell_stats(mix, &x);
                continue;
            }
        }
        let c = centroids(&x, &st);
        residual = c.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let d = st.distortion();
        // distortion is a difference of second moments of size x^2
        let slack = 64.0 * f64::EPSILON * x.iter().map(|v| v * v).fold(0.0, f64::max);
        debug_assert!(
            trace.last().map_or(true, |&prev: &f64| d <= prev * (1.0 + 1e-9) + slack),
            "distortion increased: {d} after {:?}",
            trace.last()
        );
        trace.push(d);
        if residual <= cfg.tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iter {
            break;
        }
        iterations += 1;

        if cfg.newton && n > 1 {
            if let Some(xn) = newton_candidate(&x, &c, &st) {
                let sn = cell_stats(mix, &xn);
                if sn.m0.iter().all(|&m| m > f64::MIN_POSITIVE) && sn.distortion() <= d * (1.0 + DISTORTION_SLACK) {
                    x = xn;
                    st = sn;
                    continue;
                }
            }
        }
        let mut next = c;
        make_strictly_increasing(&mut next);
        x = next;
        st = cell_stats(mix, &x);
    }

    let weights = normalised(&st.m0);
    let mut grid = Grid::from_1d(x)?;
    grid.set_weights_unchecked(weights);
    Ok(LloydOutcome {
        grid,
        iterations,
        residual,
        converged,
        reseeds,
        distortion_trace: trace,
    })
}

pub(crate) fn normalised(m0: &[f64]) -> Vec<f64> {
    let total: f64 = m0.iter().sum();
    if total > 0.0 {
        m0.iter().map(|m| m / total).collect()
    } else {
        vec![1.0 / m0.len() as f64; m0.len()]
    }
}

/// Cell centroids, clamped into their cells; empty cells keep their point.
pub(crate) fn centroids(x: &[f64], st: &CellStats) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|j| {
            if !(st.m0[j] > 0.0) {
                return x[j];
            }
            let lo = if j == 0 { f64::NEG_INFINITY } else { 0.5 * (x[j - 1] + x[j]) };
            let hi = if j + 1 == n { f64::INFINITY } else { 0.5 * (x[j] + x[j + 1]) };
            (st.m1[j] / st.m0[j]).clamp(lo, hi)
        })
        .collect()
}

/// Newton step on `c(x) - x = 0`; the centroid map has a tridiagonal Jacobian.
fn newton_candidate(x: &[f64], c: &[f64], st: &CellStats) -> Option<Vec<f64>> {
    let n = x.len();
    let b: Vec<f64> = x.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    for j in 0..n {
        let m0 = st.m0[j];
        let a = if j > 0 { st.boundary_density[j - 1] * (c[j] - b[j - 1]) / m0 } else { 0.0 };
        let bb = if j + 1 < n { st.boundary_density[j] * (b[j] - c[j]) / m0 } else { 0.0 };
        sub[j] = 0.5 * a;
        sup[j] = 0.5 * bb;
        diag[j] = 0.5 * (a + bb) - 1.0;
    }
    let rhs: Vec<f64> = x.iter().zip(c).map(|(xi, ci)| xi - ci).collect();
    let delta = solve_tridiagonal(&sub, &diag, &sup, &rhs)?;
    let xn: Vec<f64> = x.iter().zip(&delta).map(|(xi, d)| xi + d).collect();
    if xn.iter().all(|v| v.is_finite()) && xn.windows(2).all(|w| w[1] > w[0]) {
        Some(xn)
    } else {
        None
    }
}

/// Thomas algorithm; `None` on a vanishing pivot.
pub(crate) fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    let mut piv = diag[0];
    if !(piv.abs() > 1e-300) {
        return None;
    }
    cp[0] = sup[0] / piv;
    dp[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - sub[i] * cp[i - 1];
        if !(piv.abs() > 1e-300) {
            return None;
        }
        cp[i] = sup[i] / piv;
        dp[i] = (rhs[i] - sub[i] * dp[i - 1]) / piv;
    }
    let mut out = dp;
    for i in (0..n - 1).rev() {
        out[i] -= cp[i] * out[i + 1];
    }
    Some(out)
}

/// Moves the point of empty cell `j` to the midpoint of the widest occupied
/// cell, outer cells clipped to the support.
fn reseed_empty(x: &mut Vec<f64>, j: usize, st: &CellStats, support: (f64, f64)) {
    let n = x.len();
    let mut best = None;
    let mut best_w = -1.0;
    for i in 0..n {
        if !(st.m0[i] > f64::MIN_POSITIVE) {
            continue;
        }
        let lo = if i == 0 { support.0.min(x[0]) } else { 0.5 * (x[i - 1] + x[i]) };
        let hi = if i + 1 == n { support.1.max(x[n - 1]) } else { 0.5 * (x[i] + x[i + 1]) };
        if hi - lo > best_w {
            best_w = hi - lo;
            best = Some(0.5 * (lo + hi));
        }
    }
    let Some(mut target) = best else { return };
    if x.contains(&target) {
        target += best_w * 1e-6;
    }
    x.remove(j);
    let pos = x.partition_point(|&v| v < target);
    x.insert(pos, target);
    make_strictly_increasing(x);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantizer::mixture::Component;
    use approx::assert_abs_diff_eq;

    fn std_normal() -> GaussianMixture {
        GaussianMixture::standard()
    }

    #[test]
    fn one_point_is_the_mean() {
        let out = lloyd_mixture_1d(&GaussianMixture::normal(2.5, 3.0).unwrap(), 1, &LloydConfig::default()).unwrap();
        assert_abs_diff_eq!(out.grid.coords()[0], 2.5, epsilon = 1e-12);
        assert!(out.converged);
    }

    #[test]
    fn two_point_normal() {
        let out = lloyd_mixture_1d(&std_normal(), 2, &LloydConfig::default()).unwrap();
        let e = (2.0 / std::f64::consts::PI).sqrt();
        assert_abs_diff_eq!(out.grid.coords()[0], -e, epsilon = 1e-10);
        assert_abs_diff_eq!(out.grid.coords()[1], e, epsilon = 1e-10);
        assert_abs_diff_eq!(out.distortion(), 1.0 - 2.0 / std::f64::consts::PI, epsilon = 1e-12);
        let w = out.grid.weights().unwrap();
        assert_abs_diff_eq!(w[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn separated_components() {
        let law = |m| ComponentLaw::Normal { mean: m, std: 1.0 };
        let mix = GaussianMixture::new(vec![
            Component { law: law(-10.0), weight: 0.5 },
            Component { law: law(10.0), weight: 0.5 },
        ])
        .unwrap();
        let out = lloyd_mixture_1d(&mix, 2, &LloydConfig::default()).unwrap();
        assert_abs_diff_eq!(out.grid.coords()[0], -10.0, epsilon = 1e-6);
        assert_abs_diff_eq!(out.grid.coords()[1], 10.0, epsilon = 1e-6);
    }

    #[test]
    fn newton_and_plain_lloyd_agree() {
        let newton = lloyd_mixture_1d(&std_normal(), 20, &LloydConfig::default()).unwrap();
        let plain = lloyd_mixture_1d(
            &std_normal(),
            20,
            &LloydConfig {
                tol: 1e-10,
                max_iter: 100_000,
                newton: false,
            },
        )
        .unwrap();
        assert!(newton.converged && plain.converged);
        assert!(newton.iterations < plain.iterations);
        for (a, b) in newton.grid.coords().iter().zip(plain.grid.coords()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn distortion_trace_is_monotone() {
        let law = |m, s| ComponentLaw::Normal { mean: m, std: s };
        let mix = GaussianMixture::new(vec![
            Component { law: law(-1.0, 0.3), weight: 0.2 },
            Component { law: law(0.5, 1.0), weight: 0.5 },
            Component { law: law(4.0, 0.1), weight: 0.3 },
        ])
        .unwrap();
        for newton in [false, true] {
            let cfg = LloydConfig {
                newton,
                max_iter: 2000,
                ..Default::default()
            };
            let out = lloyd_mixture_1d(&mix, 30, &cfg).unwrap();
            for w in out.distortion_trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
            }
            assert!(out.converged || !newton);
        }
    }

    #[test]
    fn point_masses_reseed_without_error() {
        let dirac = |m| ComponentLaw::Normal { mean: m, std: 0.0 };
        let mix = GaussianMixture::new(vec![
            Component { law: dirac(0.0), weight: 0.5 },
            Component { law: dirac(1.0), weight: 0.5 },
        ])
        .unwrap();
        let out = lloyd_mixture_1d(&mix, 4, &LloydConfig::default()).unwrap();
        assert_eq!(out.grid.len(), 4);
        let two = lloyd_mixture_1d(&mix, 2, &LloydConfig::default()).unwrap();
        assert_abs_diff_eq!(two.grid.coords()[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(two.grid.coords()[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn tridiagonal_solver() {
        let sub = [0.0, 1.0, 1.0];
        let diag = [4.0, 4.0, 4.0];
        let sup = [1.0, 1.0, 0.0];
        let x = [1.0, -2.0, 3.0];
        let rhs = [4.0 * 1.0 - 2.0, 1.0 - 8.0 + 3.0, -2.0 + 12.0];
        let got = solve_tridiagonal(&sub, &diag, &sup, &rhs).unwrap();
        for (a, b) in got.iter().zip(x) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-14);
        }
    }
}
