//! Gauss-Legendre and Gauss-Laguerre rules, the standard normal distribution,
//! and Gaussian-weighted integration over bounded intervals or half-lines.
//!
//! The Gaussian-weighted helpers all integrate `f(z) exp(-z^2/2)`; callers
//! divide by `sqrt(2 pi)` when they want a probability-weighted integral.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Largest supported number of nodes.
pub const MAX_NODES: usize = 256;

/// Default Legendre order for transition integrals.
pub const DEFAULT_LEGENDRE_ORDER: usize = 64;

/// Default Laguerre order for transition integrals.
pub const DEFAULT_LAGUERRE_ORDER: usize = 32;

/// Below this abscissa the half-line substitution `x = z^2 / 2` is applied
/// from the split point only; `[a, split]` is handled by Gauss-Legendre.
pub const TAIL_SPLIT: f64 = 3.0;

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    Legendre,
    Laguerre,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailSide {
    /// `[a, +inf)`
    Upper,
    /// `(-inf, a]`
    Lower,
}

/// A Gauss quadrature rule with strictly increasing nodes and positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    kind: RuleKind,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

fn check_order(n: usize) -> Result<()> {
    if n == 0 || n > MAX_NODES {
        return Err(Error::invalid(format!(
            "quadrature order {n} outside [1, {MAX_NODES}]"
        )));
    }
    Ok(())
}

/// Evaluates `(P_n(x), P_{n-1}(x))` by the three-term recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
        p_prev = p;
        p = next;
    }
    (p, p_prev)
}

/// n-point Gauss-Legendre rule on `[-1, 1]`.
pub fn legendre_rule(n: usize) -> Result<QuadratureRule> {
    check_order(n)?;
    let nf = n as f64;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    // roots come in symmetric pairs; solve for the positive half
    for i in 0..n.div_ceil(2) {
        let mut x = if n % 2 == 1 && i == n / 2 {
            0.0
        } else {
            (PI * (i as f64 + 0.75) / (nf + 0.5)).cos()
        };
        for _ in 0..NEWTON_MAX_ITER {
            let (p, p_prev) = legendre_pair(n, x);
            let dp = nf * (x * p - p_prev) / (x * x - 1.0);
            let step = p / dp;
            x -= step;
            if step.abs() <= NEWTON_TOL {
                break;
            }
        }
        let (p, p_prev) = legendre_pair(n, x);
        let dp = nf * (x * p - p_prev) / (x * x - 1.0);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    Ok(QuadratureRule {
        kind: RuleKind::Legendre,
        nodes,
        weights,
    })
}

/// Evaluates `(L_n(x), L_{n-1}(x))` by the three-term recurrence.
fn laguerre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut l_prev = 1.0;
    let mut l = 1.0 - x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 - x) * l - kf * l_prev) / (kf + 1.0);
        l_prev = l;
        l = next;
    }
    (l, l_prev)
}

/// n-point Gauss-Laguerre rule for `int_0^inf f(x) exp(-x) dx`.
///
/// Weights follow `w_i = x_i / ((n+1)^2 L_{n+1}(x_i)^2)`. For orders above
/// roughly 170 the weights of the largest nodes are below the smallest
/// normal double and flush towards zero.
pub fn laguerre_rule(n: usize) -> Result<QuadratureRule> {
    check_order(n)?;
    let nf = n as f64;
    let mut nodes: Vec<f64> = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = match i {
            0 => 3.0 / (1.0 + 2.4 * nf),
            1 => nodes[0] + 15.0 / (1.0 + 2.5 * nf),
            _ => {
                let ai = (i - 1) as f64;
                nodes[i - 1] + (1.0 + 2.55 * ai) / (1.9 * ai) * (nodes[i - 1] - nodes[i - 2])
            }
        };
        for _ in 0..NEWTON_MAX_ITER {
            let (l, l_prev) = laguerre_pair(n, x);
            let dl = nf * (l - l_prev) / x;
            let step = l / dl;
            x -= step;
            if step.abs() <= NEWTON_TOL * x {
                break;
            }
        }
        nodes.push(x);
    }
    for w in nodes.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::numeric(format!(
                "Laguerre root search failed to separate nodes at order {n}"
            )));
        }
    }
    // x / ((n+1)^2 L_{n+1}^2) rewritten with L_{n+1} = -n/(n+1) L_{n-1} for one
    // of the two factors, which cancels the first-order effect of root rounding.
    let weights = nodes
        .iter()
        .map(|&x| {
            let (l_next, _) = laguerre_pair(n + 1, x);
            let (_, l_prev) = laguerre_pair(n, x);
            x / (nf * (nf + 1.0) * (-l_prev * l_next))
        })
        .collect();
    Ok(QuadratureRule {
        kind: RuleKind::Laguerre,
        nodes,
        weights,
    })
}

/// Standard normal density.
#[inline]
pub fn pdf(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF. NaN propagates.
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - cdf(x)`, accurate for large positive `x`.
#[inline]
pub fn sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// `P(a < Z <= b)` for a standard normal `Z`, with `a <= b`.
///
/// Differences are taken on whichever tail keeps both terms small.
#[inline]
pub fn interval_prob(a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    if a > 0.0 {
        sf(a) - sf(b)
    } else {
        cdf(b) - cdf(a)
    }
}

/// Checked standard normal CDF.
pub fn normal_cdf(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::invalid("normal_cdf of NaN"));
    }
    Ok(cdf(x))
}

/// `((b-a)/2) * sum w_i f((b-a)/2 x_i + (a+b)/2)`.
pub fn integrate_closed<F>(f: F, a: f64, b: f64, rule: &QuadratureRule) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if rule.kind != RuleKind::Legendre {
        return Err(Error::invalid("integrate_closed needs a Legendre rule"));
    }
    if !(a < b) {
        return Err(Error::invalid(format!(
            "integrate_closed needs a < b, got [{a}, {b}]"
        )));
    }
    Ok(apply(f, &legendre_nodes(a, b, rule)))
}

/// Approximates `int_a^inf f(z) e^{-z^2/2} dz` or `int_{-inf}^a f(z) e^{-z^2/2} dz`.
pub fn integrate_gaussian_tail<F>(f: F, a: f64, side: TailSide, rule: &QuadratureRule) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if rule.kind != RuleKind::Laguerre {
        return Err(Error::invalid("integrate_gaussian_tail needs a Laguerre rule"));
    }
    if !a.is_finite() {
        return Err(Error::invalid("integrate_gaussian_tail needs a finite bound"));
    }
    Ok(apply(f, &gaussian_tail_nodes(a, side, rule)))
}

fn apply<F: FnMut(f64) -> f64>(mut f: F, nodes: &[(f64, f64)]) -> f64 {
    nodes.iter().map(|&(z, w)| w * f(z)).sum()
}

/// Plain Legendre nodes mapped to `[a, b]`: `int_a^b f ~ sum w f(z)`.
pub fn legendre_nodes(a: f64, b: f64, rule: &QuadratureRule) -> Vec<(f64, f64)> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.iter().map(|(x, w)| (half * x + mid, half * w)).collect()
}

fn split_legendre() -> &'static QuadratureRule {
    static RULE: OnceLock<QuadratureRule> = OnceLock::new();
    RULE.get_or_init(|| legendre_rule(DEFAULT_LEGENDRE_ORDER).expect("valid order"))
}

/// Nodes `(z, W)` with `int_a^inf f(z) e^{-z^2/2} dz ~ sum W f(z)` (upper side),
/// mirrored for the lower side.
pub fn gaussian_tail_nodes(a: f64, side: TailSide, laguerre: &QuadratureRule) -> Vec<(f64, f64)> {
    // Lower tail at a is the upper tail at -a of the reflected integrand.
    let start = match side {
        TailSide::Upper => a,
        TailSide::Lower => -a,
    };
    let mut out = Vec::with_capacity(laguerre.len() + DEFAULT_LEGENDRE_ORDER);
    let from = if start < TAIL_SPLIT {
        for (z, w) in legendre_nodes(start, TAIL_SPLIT, split_legendre()) {
            out.push((z, w * (-0.5 * z * z).exp()));
        }
        TAIL_SPLIT
    } else {
        start
    };
    let damp = (-0.5 * from * from).exp();
    let a2 = from * from;
    for (x, w) in laguerre.iter() {
        let z = (2.0 * x + a2).sqrt();
        out.push((z, damp * w / z));
    }
    if side == TailSide::Lower {
        for node in &mut out {
            node.0 = -node.0;
        }
    }
    out
}

/// Nodes `(z, W)` with `int_lo^hi f(z) e^{-z^2/2} dz ~ sum W f(z)`; either bound may be infinite.
pub fn gaussian_nodes(
    lo: f64,
    hi: f64,
    legendre: &QuadratureRule,
    laguerre: &QuadratureRule,
) -> Vec<(f64, f64)> {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => {
            if !(lo < hi) {
                return Vec::new();
            }
            legendre_nodes(lo, hi, legendre)
                .into_iter()
                .map(|(z, w)| (z, w * (-0.5 * z * z).exp()))
                .collect()
        }
        (false, true) => gaussian_tail_nodes(hi, TailSide::Lower, laguerre),
        (true, false) => gaussian_tail_nodes(lo, TailSide::Upper, laguerre),
        (false, false) => {
            let mut nodes = gaussian_tail_nodes(0.0, TailSide::Lower, laguerre);
            nodes.extend(gaussian_tail_nodes(0.0, TailSide::Upper, laguerre));
            nodes
        }
    }
}
