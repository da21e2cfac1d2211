use crate::quantizer::grid::sq_dist;

/// Exact nearest-point search over a fixed point set (row-major, `dim`
/// coordinates). Ties on distance go to the lowest point index.
///
/// Points are sorted by their first coordinate; a query walks outward from
/// its own position and stops once the first-coordinate gap alone exceeds
/// the current radius.
#[derive(Debug, Clone)]
pub struct NearestIndex {
    dim: usize,
    /// Sorted points, row-major.
    sorted: Vec<f64>,
    /// First coordinate of each sorted point.
    keys: Vec<f64>,
    /// Original index of each sorted point.
    ids: Vec<u32>,
}

impl NearestIndex {
    pub fn new(dim: usize, points: &[f64]) -> Self {
        let n = points.len() / dim;
        let mut order: Vec<u32> = (0..n as u32).collect();
        order.sort_by(|&a, &b| {
            points[a as usize * dim]
                .total_cmp(&points[b as usize * dim])
                .then(a.cmp(&b))
        });
        let mut sorted = Vec::with_capacity(points.len());
        for &i in &order {
            sorted.extend_from_slice(&points[i as usize * dim..(i as usize + 1) * dim]);
        }
        let keys = order.iter().map(|&i| points[i as usize * dim]).collect();
        NearestIndex {
            dim,
            sorted,
            keys,
            ids: order,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    #[inline]
    fn point(&self, s: usize) -> &[f64] {
        &self.sorted[s * self.dim..(s + 1) * self.dim]
    }

    /// Index of the nearest point.
    pub fn nearest(&self, x: &[f64]) -> usize {
        self.search(x, false).0
    }

    /// Nearest index with its squared distance and the squared distance of
    /// the runner-up (`inf` for one-point sets).
    pub fn nearest_two(&self, x: &[f64]) -> (usize, f64, f64) {
        self.search(x, true)
    }

    fn search(&self, x: &[f64], second: bool) -> (usize, f64, f64) {
        let n = self.ids.len();
        let start = self.keys.partition_point(|&k| k < x[0]);
        let mut best = u32::MAX;
        let mut d1 = f64::INFINITY;
        let mut d2 = f64::INFINITY;
        let consider = |s: usize, best: &mut u32, d1: &mut f64, d2: &mut f64| {
            let d = sq_dist(x, self.point(s));
            let id = self.ids[s];
            if d < *d1 || (d == *d1 && id < *best) {
                *d2 = *d1;
                *d1 = d;
                *best = id;
            } else if d < *d2 {
                *d2 = d;
            }
        };
        let (mut lo, mut hi) = (start, start);
        let (mut lo_open, mut hi_open) = (start > 0, start < n);
        while lo_open || hi_open {
            if hi_open {
                let gap = self.keys[hi] - x[0];
                let radius = if second { d2 } else { d1 };
                if gap * gap > radius {
                    hi_open = false;
                } else {
                    consider(hi, &mut best, &mut d1, &mut d2);
                    hi += 1;
                    hi_open = hi < n;
                }
            }
            if lo_open {
                let gap = x[0] - self.keys[lo - 1];
                let radius = if second { d2 } else { d1 };
                if gap * gap > radius {
                    lo_open = false;
                } else {
                    consider(lo - 1, &mut best, &mut d1, &mut d2);
                    lo -= 1;
                    lo_open = lo > 0;
                }
            }
        }
        (best as usize, d1, d2)
    }
}
