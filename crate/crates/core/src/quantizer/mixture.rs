use crate::error::{Error, Result};
use crate::quadrature::{cdf, pdf, sf};

/// Tolerance on the total of mixture or atom weights.
pub const MIXTURE_WEIGHT_TOL: f64 = 1e-12;

/// Law of one scalar component, written as a function of a standard normal `e`.
///
/// `Normal` is `mean + std * e` (`std == 0` is a point mass); `LogNormal` is
/// `scale * exp(log_mean + log_std * e)` with `scale > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ComponentLaw {
    Normal { mean: f64, std: f64 },
    LogNormal { scale: f64, log_mean: f64, log_std: f64 },
}

impl ComponentLaw {
    pub fn mean(&self) -> f64 {
        match *self {
            ComponentLaw::Normal { mean, .. } => mean,
            ComponentLaw::LogNormal {
                scale,
                log_mean,
                log_std,
            } => scale * (log_mean + 0.5 * log_std * log_std).exp(),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        match *self {
            ComponentLaw::Normal { std, .. } => std == 0.0,
            ComponentLaw::LogNormal { log_std, .. } => log_std == 0.0,
        }
    }

    /// Value of the component at noise `e`.
    #[inline]
    pub fn at(&self, e: f64) -> f64 {
        match *self {
            ComponentLaw::Normal { mean, std } => mean + std * e,
            ComponentLaw::LogNormal {
                scale,
                log_mean,
                log_std,
            } => scale * (log_mean + log_std * e).exp(),
        }
    }

    /// The noise level `e` mapped to `b`. Point masses give `+inf` when the
    /// atom lies at or below `b`, matching the `(lo, hi]` cell convention.
    #[inline]
    pub fn noise_bound(&self, b: f64) -> f64 {
        if b == f64::INFINITY {
            return f64::INFINITY;
        }
        if b == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        match *self {
            ComponentLaw::Normal { mean, std } => {
                if std == 0.0 {
                    if mean <= b {
                        f64::INFINITY
                    } else {
                        f64::NEG_INFINITY
                    }
                } else {
                    (b - mean) / std
                }
            }
            ComponentLaw::LogNormal {
                scale,
                log_mean,
                log_std,
            } => {
                if b <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let l = (b / scale).ln() - log_mean;
                if log_std == 0.0 {
                    if l >= 0.0 {
                        f64::INFINITY
                    } else {
                        f64::NEG_INFINITY
                    }
                } else {
                    l / log_std
                }
            }
        }
    }

    /// Density at `x` (zero for point masses).
    #[inline]
    pub fn density(&self, x: f64) -> f64 {
        match *self {
            ComponentLaw::Normal { mean, std } => {
                if std == 0.0 {
                    0.0
                } else {
                    pdf((x - mean) / std) / std
                }
            }
            ComponentLaw::LogNormal {
                scale,
                log_mean,
                log_std,
            } => {
                if log_std == 0.0 || x <= 0.0 {
                    0.0
                } else {
                    pdf(((x / scale).ln() - log_mean) / log_std) / (log_std * x)
                }
            }
        }
    }

    /// `(P, E[X 1], E[(X-c)^2 1])` over the noise interval `(l, u]`.
    pub fn partial_moments(&self, l: f64, u: f64, c: f64) -> (f64, f64, f64) {
        let lo = TailCdf::at(l);
        let hi = TailCdf::at(u);
        let p = lo.mass_to(&hi);
        match *self {
            ComponentLaw::Normal { mean, std } => {
                let (pl, pu) = (pdf_ext(l), pdf_ext(u));
                let m1 = mean * p + std * (pl - pu);
                let d = mean - c;
                let lpl = if l.is_finite() { l * pl } else { 0.0 };
                let upu = if u.is_finite() { u * pu } else { 0.0 };
                let m2 = d * d * p + 2.0 * d * std * (pl - pu) + std * std * (p + lpl - upu);
                (p, m1, m2.max(0.0))
            }
            ComponentLaw::LogNormal {
                scale,
                log_mean,
                log_std: s,
            } => {
                let p1 = TailCdf::at(l - s).mass_to(&TailCdf::at(u - s));
                let p2 = TailCdf::at(l - 2.0 * s).mass_to(&TailCdf::at(u - 2.0 * s));
                let e1 = scale * (log_mean + 0.5 * s * s).exp();
                let e2 = scale * scale * (2.0 * log_mean + 2.0 * s * s).exp();
                let m1 = e1 * p1;
                let m2 = e2 * p2 - 2.0 * c * m1 + c * c * p;
                (p, m1, m2.max(0.0))
            }
        }
    }
}

#[inline]
fn pdf_ext(x: f64) -> f64 {
    if x.is_finite() {
        pdf(x)
    } else {
        0.0
    }
}

/// Normal CDF and survival function at one point, from a single erfc call.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TailCdf {
    x: f64,
    lower: f64,
    upper: f64,
}

impl TailCdf {
    #[inline]
    pub(crate) fn at(x: f64) -> Self {
        if x <= 0.0 {
            let lower = cdf(x);
            TailCdf {
                x,
                lower,
                upper: 1.0 - lower,
            }
        } else {
            let upper = sf(x);
            TailCdf {
                x,
                lower: 1.0 - upper,
                upper,
            }
        }
    }

    /// `P(self.x < e <= other.x)`, accurate in both tails.
    #[inline]
    pub(crate) fn mass_to(&self, other: &TailCdf) -> f64 {
        if self.x >= other.x {
            return 0.0;
        }
        let m = if self.x > 0.0 {
            self.upper - other.upper
        } else {
            other.lower - self.lower
        };
        m.max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub law: ComponentLaw,
    pub weight: f64,
}

/// A finite mixture of scalar laws driven by standard normal noise.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    components: Vec<Component>,
}

impl GaussianMixture {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        for c in &components {
            if !(c.weight >= 0.0) || !c.weight.is_finite() {
                return Err(Error::invalid("mixture weights must be finite and nonnegative"));
            }
            let ok = match c.law {
                ComponentLaw::Normal { mean, std } => mean.is_finite() && std.is_finite() && std >= 0.0,
                ComponentLaw::LogNormal {
                    scale,
                    log_mean,
                    log_std,
                } => scale.is_finite() && scale > 0.0 && log_mean.is_finite() && log_std >= 0.0 && log_std.is_finite(),
            };
            if !ok {
                return Err(Error::invalid(format!("bad mixture component {:?}", c.law)));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > MIXTURE_WEIGHT_TOL * components.len().max(1) as f64 {
            return Err(Error::invalid(format!("mixture weights sum to {total}, expected 1")));
        }
        Ok(GaussianMixture { components })
    }

    pub fn normal(mean: f64, std: f64) -> Result<Self> {
        Self::new(vec![Component {
            law: ComponentLaw::Normal { mean, std },
            weight: 1.0,
        }])
    }

    pub fn standard() -> Self {
        Self::normal(0.0, 1.0).expect("standard normal is valid")
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.law.mean()).sum()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * TailCdf::at(c.law.noise_bound(x)).lower_or_edge())
            .sum()
    }

    pub fn density(&self, x: f64) -> f64 {
        self.components.iter().map(|c| c.weight * c.law.density(x)).sum()
    }

    /// Smallest and largest `x` with non-negligible mass (`|e| <= 12`).
    pub fn support_hint(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for c in self.components.iter().filter(|c| c.weight > 0.0) {
            lo = lo.min(c.law.at(-12.0));
            hi = hi.max(c.law.at(12.0));
        }
        (lo, hi)
    }

    /// Level-`p` quantile, by bisection on the mixture CDF.
    pub fn quantile(&self, p: f64) -> f64 {
        let (lo, hi) = self.support_hint();
        self.quantile_in(p, lo, hi)
    }

    pub(crate) fn quantile_in(&self, p: f64, mut lo: f64, mut hi: f64) -> f64 {
        if lo >= hi {
            return lo;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

impl TailCdf {
    #[inline]
    fn lower_or_edge(&self) -> f64 {
        if self.x == f64::INFINITY {
            1.0
        } else if self.x == f64::NEG_INFINITY {
            0.0
        } else {
            self.lower
        }
    }
}

/// Weighted atoms of a discrete law in `dim` dimensions, row-major points.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomCloud {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl AtomCloud {
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.len() != dim * weights.len() || weights.is_empty() {
            return Err(Error::invalid(format!(
                "atom cloud shape mismatch: {} coordinates, {} weights, dim {dim}",
                points.len(),
                weights.len()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("atom coordinates must be finite"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("atom weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12_f64.max(weights.len() as f64 * 1e-15) {
            return Err(Error::invalid(format!("atom weights sum to {total}, expected 1")));
        }
        Ok(AtomCloud {
            dim,
            points,
            weights,
        })
    }

    /// Equal-weight cloud.
    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        let m = if dim == 0 { 0 } else { points.len() / dim };
        Self::new(dim, points, vec![1.0 / m.max(1) as f64; m])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn normal_partial_moments_full_line() {
        let law = ComponentLaw::Normal { mean: 1.5, std: 2.0 };
        let (p, m1, m2) = law.partial_moments(f64::NEG_INFINITY, f64::INFINITY, 0.5);
        assert_abs_diff_eq!(p, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m1, 1.5, epsilon = 1e-14);
        assert_abs_diff_eq!(m2, 4.0 + 1.0, epsilon = 1e-13);
    }

    #[test]
    fn lognormal_moments_match_quadrature() {
        let law = ComponentLaw::LogNormal {
            scale: 100.0,
            log_mean: -0.001,
            log_std: 0.05,
        };
        let (l, u, c) = (-0.4, 1.3, 101.0);
        let (p, m1, m2) = law.partial_moments(l, u, c);
        let rule = crate::quadrature::legendre_rule(64).unwrap();
        let q = |f: &dyn Fn(f64) -> f64| {
            crate::quadrature::integrate_closed(|e| f(e) * pdf(e), l, u, &rule).unwrap()
        };
        assert_abs_diff_eq!(p, q(&|_| 1.0), epsilon = 1e-14);
        assert_abs_diff_eq!(m1, q(&|e| law.at(e)), epsilon = 1e-11);
        assert_abs_diff_eq!(m2, q(&|e| (law.at(e) - c).powi(2)), epsilon = 1e-9);
    }

    #[test]
    fn point_mass_bounds() {
        let law = ComponentLaw::Normal { mean: 2.0, std: 0.0 };
        assert_eq!(law.noise_bound(2.0), f64::INFINITY);
        assert_eq!(law.noise_bound(1.999), f64::NEG_INFINITY);
        let (p, m1, _) = law.partial_moments(law.noise_bound(1.0), law.noise_bound(2.0), 0.0);
        assert_eq!(p, 1.0);
        assert_eq!(m1, 2.0);
    }

    #[test]
    fn mixture_quantile_inverts_cdf() {
        let m = GaussianMixture::new(vec![
            Component {
                law: ComponentLaw::Normal { mean: -3.0, std: 1.0 },
                weight: 0.3,
            },
            Component {
                law: ComponentLaw::Normal { mean: 4.0, std: 0.5 },
                weight: 0.7,
            },
        ])
        .unwrap();
        for p in [0.01, 0.3, 0.5, 0.9] {
            assert_abs_diff_eq!(m.cdf(m.quantile(p)), p, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(m.mean(), 0.3 * -3.0 + 0.7 * 4.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_weights() {
        let law = ComponentLaw::Normal { mean: 0.0, std: 1.0 };
        assert!(GaussianMixture::new(vec![Component { law, weight: 0.9 }]).is_err());
        assert!(GaussianMixture::new(vec![]).is_err());
        assert!(AtomCloud::new(1, vec![0.0, 1.0], vec![0.5, 0.4]).is_err());
    }
}
