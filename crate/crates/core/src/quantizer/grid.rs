use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Tolerance on the total of cell weights.
pub const WEIGHT_SUM_TOL: f64 = 1e-10;

/// A finite quantization grid with optional Voronoi cell weights.
///
/// Points are stored row-major (`len * dim` values). One-dimensional grids
/// are kept strictly increasing, so cell `j` is `(b_{j-1}, b_j]` with `b`
/// the midpoints and the outer cells unbounded.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    points: Vec<f64>,
    weights: Option<Vec<f64>>,
}

impl Grid {
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("grid dimension must be positive"));
        }
        if points.is_empty() || points.len() % dim != 0 {
            return Err(Error::invalid(format!(
                "grid needs a positive multiple of {dim} coordinates, got {}",
                points.len()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid points must be finite"));
        }
        let grid = Grid {
            dim,
            points,
            weights: None,
        };
        grid.check_distinct()?;
        Ok(grid)
    }

    pub fn from_1d(points: Vec<f64>) -> Result<Self> {
        Self::new(1, points)
    }

    /// The degenerate grid `{x0}` with unit weight.
    pub fn singleton(point: &[f64]) -> Result<Self> {
        Self::new(point.len(), point.to_vec())?.with_weights(vec![1.0])
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::invalid(format!(
                "{} weights for a grid of {} points",
                weights.len(),
                self.len()
            )));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("cell weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid(format!("cell weights sum to {total}, expected 1")));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    /// Replaces cell weights without the unit-sum check; used for partially
    /// normalised intermediate states.
    pub(crate) fn set_weights_unchecked(&mut self, weights: Vec<f64>) {
        debug_assert_eq!(weights.len(), self.len());
        self.weights = Some(weights);
    }

    fn check_distinct(&self) -> Result<()> {
        if self.dim == 1 {
            if let Some(w) = self.points.windows(2).find(|w| !(w[1] > w[0])) {
                return Err(Error::invalid(format!(
                    "1-d grid points must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
            return Ok(());
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| lex_cmp(self.point(a), self.point(b)));
        for w in order.windows(2) {
            if self.point(w[0]) == self.point(w[1]) {
                return Err(Error::invalid(format!(
                    "grid points {} and {} coincide",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    /// Flat row-major coordinates.
    pub fn coords(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Voronoi midpoints of a 1-d grid (`len - 1` values).
    pub fn midpoints(&self) -> Vec<f64> {
        assert_eq!(self.dim, 1, "midpoints are defined for 1-d grids");
        self.points.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Index of the nearest point, lowest index on ties.
    pub fn nearest(&self, x: &[f64]) -> usize {
        debug_assert_eq!(x.len(), self.dim);
        if self.dim == 1 {
            return nearest_sorted_1d(&self.points, x[0]);
        }
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, p) in self.points().enumerate() {
            let d = sq_dist(p, x);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        best
    }
}

/// Nearest point of a strictly increasing set; ties go to the lower index.
#[inline]
pub fn nearest_sorted_1d(points: &[f64], x: f64) -> usize {
    // first index whose right boundary is >= x, i.e. count of midpoints below x
    let n = points.len();
    let mut lo = 0usize;
    let mut hi = n - 1;
    while lo < hi {
        let mid = (lo + hi) / 2;
        let boundary = 0.5 * (points[mid] + points[mid + 1]);
        if boundary < x {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (u, v) in a.iter().zip(b) {
        match u.total_cmp(v) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unsorted_or_duplicate() {
        assert!(Grid::from_1d(vec![0.0, 0.0]).is_err());
        assert!(Grid::from_1d(vec![1.0, 0.0]).is_err());
        assert!(Grid::new(2, vec![0.0, 1.0, 0.0, 1.0]).is_err());
        assert!(Grid::new(2, vec![0.0, 1.0, 1.0]).is_err());
        assert!(Grid::from_1d(vec![]).is_err());
    }

    #[test]
    fn weights_validated() {
        let g = Grid::from_1d(vec![-1.0, 1.0]).unwrap();
        assert!(g.clone().with_weights(vec![0.5, 0.4]).is_err());
        assert!(g.clone().with_weights(vec![1.5, -0.5]).is_err());
        assert!(g.with_weights(vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn nearest_ties_go_low() {
        let g = Grid::from_1d(vec![-1.0, 1.0, 3.0]).unwrap();
        assert_eq!(g.nearest(&[0.0]), 0);
        assert_eq!(g.nearest(&[0.0000001]), 1);
        assert_eq!(g.nearest(&[2.0]), 1);
        assert_eq!(g.nearest(&[-50.0]), 0);
        assert_eq!(g.nearest(&[50.0]), 2);

        let g2 = Grid::new(2, vec![0.0, 0.0, 2.0, 0.0]).unwrap();
        assert_eq!(g2.nearest(&[1.0, 5.0]), 0);
        assert_eq!(g2.nearest(&[1.1, 5.0]), 1);
    }
}
