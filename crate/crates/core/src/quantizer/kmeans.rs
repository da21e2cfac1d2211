use crate::error::{Error, Result};
use crate::quantizer::grid::{lex_cmp, sq_dist, Grid};
use crate::quantizer::mixture::AtomCloud;
use crate::quantizer::nn::NearestIndex;

/// Relative safety margin on Hamerly bounds, so that pruning never skips an
/// atom whose assignment could change (ties included).
const BOUND_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmeansConfig {
    /// Stop when no centre moves further than `tol`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        KmeansConfig {
            tol: 1e-10,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KmeansOutcome {
    /// Centres with cell weights from the final assignment.
    pub grid: Grid,
    /// Cell index of every atom under nearest-centre assignment.
    pub assignment: Vec<u32>,
    pub iterations: usize,
    pub converged: bool,
    pub reseeds: usize,
    /// `sum_a w_a |x_a - c(a)|^2` for the final centres.
    pub distortion: f64,
}

/// Lloyd iteration on a discrete law, pruned with Hamerly's bounds.
///
/// Centres start at the atoms with sorted ranks `floor((i - 0.5) M / N)`, or at
/// the weighted quantiles of the sorted atoms when weights differ.
pub fn weighted_kmeans(cloud: &AtomCloud, n: usize, cfg: &KmeansConfig) -> Result<KmeansOutcome> {
    let d = cloud.dim();
    let m = cloud.len();
    if n == 0 {
        return Err(Error::invalid("grid size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| lex_cmp(cloud.point(a), cloud.point(b)));
    let distinct = 1 + order
        .windows(2)
        .filter(|w| cloud.point(w[0]) != cloud.point(w[1]))
        .count();
    if distinct < n {
        return Err(Error::invalid(format!(
            "cannot place {n} centres on {distinct} distinct atoms"
        )));
    }
    let mut centres = vec![0.0; n * d];
    let w = cloud.weights();
    if w.iter().all(|&v| v == w[0]) {
        for i in 0..n {
            let rank = (((i as f64 + 0.5) * m as f64) / n as f64).floor() as usize;
            let a = order[rank.min(m - 1)];
            centres[i * d..(i + 1) * d].copy_from_slice(cloud.point(a));
        }
    } else {
        // weighted ranks: the first atom whose cumulated weight reaches (i + 0.5) / N
        let mut acc = 0.0;
        let mut r = 0;
        for i in 0..n {
            let level = (i as f64 + 0.5) / n as f64;
            while r + 1 < m && acc + w[order[r]] < level {
                acc += w[order[r]];
                r += 1;
            }
            centres[i * d..(i + 1) * d].copy_from_slice(cloud.point(order[r]));
        }
    }
    drop(order);

    let mut km = Hamerly::new(cloud, n, centres);
    let mut reseeds = 0;
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let (moved, empty) = km.update_centres();
        if let Some(j) = empty {
            km.reseed(j);
            reseeds += 1;
            iterations += 1;
            if iterations >= cfg.max_iter {
                break;
            }
            continue;
        }
        let max_move = moved.iter().cloned().fold(0.0, f64::max);
        if max_move <= cfg.tol {
            converged = true;
            // centres may have shifted by <= tol; refresh the assignment
            km.reassign_all();
            break;
        }
        if iterations >= cfg.max_iter {
            km.reassign_all();
            break;
        }
        iterations += 1;
        let changes = km.assign(&moved);
        if changes == 0 {
            // the assignment is stable, so the next centre update is a no-op
            km.update_centres();
            km.reassign_all();
            converged = true;
            break;
        }
    }
    let mut weights = km.cell_weights();
    let distortion = km.distortion();
    if d == 1 && km.centres.windows(2).any(|w| !(w[1] > w[0])) {
        // a reseed can leave 1-d centres out of order
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| km.centres[a].total_cmp(&km.centres[b]));
        let mut rank = vec![0u32; n];
        for (r, &o) in order.iter().enumerate() {
            rank[o] = r as u32;
        }
        km.centres = order.iter().map(|&o| km.centres[o]).collect();
        weights = order.iter().map(|&o| weights[o]).collect();
        for a in &mut km.assign_of {
            *a = rank[*a as usize];
        }
    }
    let grid = Grid::new(d, km.centres)?;
    // masses come straight from the atom weights and already sum to one
    let mut grid = grid;
    grid.set_weights_unchecked(weights);
    Ok(KmeansOutcome {
        grid,
        assignment: km.assign_of,
        iterations,
        converged,
        reseeds,
        distortion,
    })
}

struct Hamerly<'a> {
    cloud: &'a AtomCloud,
    n: usize,
    centres: Vec<f64>,
    assign_of: Vec<u32>,
    upper: Vec<f64>,
    lower: Vec<f64>,
    index: NearestIndex,
}

impl<'a> Hamerly<'a> {
    fn new(cloud: &'a AtomCloud, n: usize, centres: Vec<f64>) -> Self {
        let m = cloud.len();
        let mut h = Hamerly {
            cloud,
            n,
            centres,
            assign_of: vec![0; m],
            upper: vec![0.0; m],
            lower: vec![0.0; m],
            index: NearestIndex::new(cloud.dim(), &[]),
        };
        h.reassign_all();
        h
    }

    fn dim(&self) -> usize {
        self.cloud.dim()
    }

    fn centre(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.centres[j * d..(j + 1) * d]
    }

    /// Nearest and second-nearest distances, lowest index on ties.
    fn scan(&self, x: &[f64]) -> (usize, f64, f64) {
        let (best, d1, d2) = self.index.nearest_two(x);
        (best, d1.sqrt(), d2.sqrt())
    }

    fn reindex(&mut self) {
        self.index = NearestIndex::new(self.dim(), &self.centres);
    }

    fn reassign_all(&mut self) {
        self.reindex();
        for a in 0..self.cloud.len() {
            let (j, u, l) = self.scan(self.cloud.point(a));
            self.assign_of[a] = j as u32;
            self.upper[a] = u;
            self.lower[a] = l;
        }
    }

    /// Moves centres to cell means. Returns the displacement of every centre
    /// and the first empty cell, if any.
    fn update_centres(&mut self) -> (Vec<f64>, Option<usize>) {
        let d = self.dim();
        let mut sum = vec![0.0; self.n * d];
        let mut mass = vec![0.0; self.n];
        for a in 0..self.cloud.len() {
            let j = self.assign_of[a] as usize;
            let w = self.cloud.weights()[a];
            mass[j] += w;
            for (s, x) in sum[j * d..(j + 1) * d].iter_mut().zip(self.cloud.point(a)) {
                *s += w * x;
            }
        }
        let mut moved = vec![0.0; self.n];
        let mut empty = None;
        for j in 0..self.n {
            if !(mass[j] > 0.0) {
                if empty.is_none() {
                    empty = Some(j);
                }
                continue;
            }
            let new: Vec<f64> = sum[j * d..(j + 1) * d].iter().map(|s| s / mass[j]).collect();
            moved[j] = sq_dist(&new, self.centre(j)).sqrt();
            self.centres[j * d..(j + 1) * d].copy_from_slice(&new);
        }
        self.reindex();
        (moved, empty)
    }

    /// Relocates centre `j` onto the atom with the largest weighted squared
    /// distance to its current centre.
    fn reseed(&mut self, j: usize) {
        let d = self.dim();
        let mut best = 0;
        let mut best_v = -1.0;
        for a in 0..self.cloud.len() {
            let c = self.assign_of[a] as usize;
            let v = self.cloud.weights()[a] * sq_dist(self.cloud.point(a), self.centre(c));
            if v > best_v {
                best_v = v;
                best = a;
            }
        }
        let p = self.cloud.point(best).to_vec();
        self.centres[j * d..(j + 1) * d].copy_from_slice(&p);
        self.reassign_all();
    }

    /// Hamerly assignment step after centres moved by `moved`.
    fn assign(&mut self, moved: &[f64]) -> usize {
        let n = self.n;
        // largest and second-largest displacement, for the lower-bound update
        let (mut r1, mut r2, mut i1) = (0.0, 0.0, usize::MAX);
        for (j, &mv) in moved.iter().enumerate() {
            if mv > r1 {
                r2 = r1;
                r1 = mv;
                i1 = j;
            } else if mv > r2 {
                r2 = mv;
            }
        }
        // half distance from each centre to its nearest other centre
        let mut half = vec![f64::INFINITY; n];
        for j in 0..n {
            for k in j + 1..n {
                let dist = sq_dist(self.centre(j), self.centre(k)).sqrt() * 0.5;
                if dist < half[j] {
                    half[j] = dist;
                }
                if dist < half[k] {
                    half[k] = dist;
                }
            }
        }
        let mut changes = 0;
        for a in 0..self.cloud.len() {
            let j = self.assign_of[a] as usize;
            self.upper[a] += moved[j];
            self.lower[a] -= if j == i1 { r2 } else { r1 };
            let bound = half[j].max(self.lower[a]);
            if self.upper[a] * (1.0 + BOUND_MARGIN) < bound * (1.0 - BOUND_MARGIN) {
                continue;
            }
            let x = self.cloud.point(a);
            self.upper[a] = sq_dist(x, self.centre(j)).sqrt();
            if self.upper[a] * (1.0 + BOUND_MARGIN) < bound * (1.0 - BOUND_MARGIN) {
                continue;
            }
            let (best, u, l) = self.scan(x);
            self.upper[a] = u;
            self.lower[a] = l;
            if best != j {
                self.assign_of[a] = best as u32;
                changes += 1;
            }
        }
        changes
    }

    fn cell_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n];
        for a in 0..self.cloud.len() {
            w[self.assign_of[a] as usize] += self.cloud.weights()[a];
        }
        let total: f64 = w.iter().sum();
        w.iter().map(|v| v / total).collect()
    }

    fn distortion(&self) -> f64 {
        (0..self.cloud.len())
            .map(|a| {
                let c = self.assign_of[a] as usize;
                self.cloud.weights()[a] * sq_dist(self.cloud.point(a), self.centre(c))
            })
            .sum()
    }
}
