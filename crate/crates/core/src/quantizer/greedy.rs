use crate::error::{Error, Result};
use crate::quantizer::grid::Grid;
use crate::quantizer::lloyd::{active_boundaries, cell_stats, normalised};
use crate::quantizer::mixture::GaussianMixture;

const FROZEN_TOL: f64 = 1e-13;
const FROZEN_MAX_ITER: usize = 200;

/// Greedy quantization sequence of a scalar mixture.
#[derive(Debug, Clone)]
pub struct GreedySequence {
    /// Points in insertion order.
    pub sequence: Vec<f64>,
    /// Sorted grid with cell weights.
    pub grid: Grid,
    /// Quadratic distortion after each insertion.
    pub distortion_trace: Vec<f64>,
}

/// `E[(X - c)^2 1{lo < X <= hi}]` and the first two raw partial moments.
fn interval_moments(mix: &GaussianMixture, lo: f64, hi: f64, c: f64) -> (f64, f64, f64) {
    let mut acc = (0.0, 0.0, 0.0);
    let bounds = [lo, hi];
    for comp in mix.components() {
        if comp.weight == 0.0 {
            continue;
        }
        let (t0, t1) = active_boundaries(&comp.law, &bounds);
        // the single interval (lo, hi] is "cell 1" of the three cells split by [lo, hi]
        if t0 > 1 || t1 < 1 {
            continue;
        }
        let (p, m1, m2) = comp
            .law
            .partial_moments(comp.law.noise_bound(lo), comp.law.noise_bound(hi), c);
        acc.0 += comp.weight * p;
        acc.1 += comp.weight * m1;
        acc.2 += comp.weight * m2;
    }
    acc
}

/// Local inertia of the gap between neighbours `a < b` (either may be infinite).
fn gap_inertia(mix: &GaussianMixture, a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return interval_moments(mix, a, b, b).2;
    }
    if b == f64::INFINITY {
        return interval_moments(mix, a, b, a).2;
    }
    let m = 0.5 * (a + b);
    interval_moments(mix, a, m, a).2 + interval_moments(mix, m, b, b).2
}

/// Frozen Lloyd on a single new point inside `(a, b)`, other points fixed.
fn place_point(mix: &GaussianMixture, a: f64, b: f64) -> f64 {
    let mut y = if a.is_finite() && b.is_finite() {
        0.5 * (a + b)
    } else {
        let (p, m1, _) = interval_moments(mix, a, b, 0.0);
        if p > 0.0 {
            m1 / p
        } else if a.is_finite() {
            a + 1.0_f64.max(a.abs() * 1e-3)
        } else {
            b - 1.0_f64.max(b.abs() * 1e-3)
        }
    };
    for _ in 0..FROZEN_MAX_ITER {
        let lo = if a.is_finite() { 0.5 * (a + y) } else { a };
        let hi = if b.is_finite() { 0.5 * (y + b) } else { b };
        let (p, m1, _) = interval_moments(mix, lo, hi, y);
        if !(p > 0.0) {
            break;
        }
        let c = m1 / p;
        // one-dimensional Newton on c(y) - y, guarded to stay inside the gap
        let fl = if lo.is_finite() { mix.density(lo) } else { 0.0 };
        let fh = if hi.is_finite() { mix.density(hi) } else { 0.0 };
        let dc = 0.5 * (fh * (hi - c) + fl * (c - lo)) / p;
        let mut next = if (dc - 1.0).abs() > 1e-12 { y - (c - y) / (dc - 1.0) } else { c };
        if !(next > a && next < b) || !next.is_finite() {
            next = c;
        }
        if !(next > a && next < b) {
            break;
        }
        let done = (next - y).abs() <= FROZEN_TOL * y.abs().max(1.0);
        y = next;
        if done {
            break;
        }
    }
    y
}

/// Builds `n` points greedily: the mean first, then each point placed in the
/// gap of largest local inertia and relaxed by frozen Lloyd.
pub fn greedy_sequence_1d(mix: &GaussianMixture, n: usize) -> Result<GreedySequence> {
    if n == 0 {
        return Err(Error::invalid("grid size must be at least 1"));
    }
    let mut sorted = vec![mix.mean()];
    let mut sequence = sorted.clone();
    // inertia[g] is for the gap left of sorted[g]; gap `len` is right of the last point
    let mut inertia = vec![
        gap_inertia(mix, f64::NEG_INFINITY, sorted[0]),
        gap_inertia(mix, sorted[0], f64::INFINITY),
    ];
    let mut trace = vec![cell_stats(mix, &sorted).distortion()];
    while sorted.len() < n {
        let mut g = 0;
        for (i, &s) in inertia.iter().enumerate() {
            if s > inertia[g] {
                g = i;
            }
        }
        let a = if g == 0 { f64::NEG_INFINITY } else { sorted[g - 1] };
        let b = if g == sorted.len() { f64::INFINITY } else { sorted[g] };
        let mut y = place_point(mix, a, b);
        if !(y > a && y < b) {
            // no mass to split; fall back to an arbitrary interior point
            y = if a.is_finite() && b.is_finite() {
                0.5 * (a + b)
            } else if a.is_finite() {
                a + 1.0
            } else {
                b - 1.0
            };
        }
        sorted.insert(g, y);
        sequence.push(y);
        inertia[g] = gap_inertia(mix, a, y);
        inertia.insert(g + 1, gap_inertia(mix, y, b));
        trace.push(cell_stats(mix, &sorted).distortion());
    }
    let st = cell_stats(mix, &sorted);
    let mut grid = Grid::from_1d(sorted)?;
    grid.set_weights_unchecked(normalised(&st.m0));
    Ok(GreedySequence {
        sequence,
        grid,
        distortion_trace: trace,
    })
}
