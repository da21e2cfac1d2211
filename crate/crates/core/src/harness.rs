//! Reference experiments: the bid-ask and exchange option tables, a
//! convergence study in the grid size and a closed-form European check.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::models::{EulerModel, ModelKind};
use crate::quadrature::cdf;
use crate::quantizer::io::{fmt_f64, write_atomic};
use crate::solver::{romberg_extrapolate, solve_bdpp, Driver, Payoff, RbsdeProblem};
use crate::tree::{build_recursive_tree_1d, build_tree, BuildConfig, TransitionMode, TreeMethod};

pub const STRIKES: [f64; 5] = [100.0, 105.0, 110.0, 115.0, 120.0];
pub const EXCHANGE_PARAMS: [(f64, f64); 6] = [(36.0, -0.8), (36.0, 0.0), (36.0, 0.8), (44.0, -0.8), (44.0, 0.0), (44.0, 0.8)];

const T1_VALUES: [(&str, [f64; 5]); 5] = [
    ("rq", [4.719, 2.538, 1.222, 0.526, 0.203]),
    ("grq", [4.728, 2.548, 1.225, 0.526, 0.202]),
    ("oq", [4.747, 2.561, 1.234, 0.532, 0.206]),
    ("gq", [4.704, 2.529, 1.212, 0.518, 0.198]),
    ("romberg", [4.745, 2.55, 1.219, 0.518, 0.196]),
];

const T2_VALUES: [(&str, [f64; 5]); 5] = [
    ("rq", [8.517, 6.262, 4.479, 3.11, 2.094]),
    ("grq", [8.524, 6.272, 4.483, 3.113, 2.1]),
    ("oq", [8.536, 6.288, 4.498, 3.125, 2.109]),
    ("gq", [8.593, 6.321, 4.522, 3.128, 2.103]),
    ("romberg", [8.591, 6.311, 4.502, 3.116, 2.091]),
];

const T3_VALUES: [(&str, [f64; 6]); 3] = [
    ("oq", [7.062, 5.832, 4.076, 3.834, 2.453, 0.426]),
    ("hrq", [6.979, 5.706, 4.008, 3.741, 2.329, 0.282]),
    ("gpq", [6.926, 5.763, 4.0, 3.609, 2.042, 0.401]),
];

/// Finite-difference values for the exchange option, same order as [`EXCHANGE_PARAMS`].
pub const T3_BENCHMARK: [f64; 6] = [6.975, 5.646, 4.0, 3.769, 2.336, 0.359];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TableId {
    BidAskBs,
    BidAskCev,
    Exchange,
}

impl TableId {
    pub const ALL: [TableId; 3] = [TableId::BidAskBs, TableId::BidAskCev, TableId::Exchange];

    pub fn as_str(&self) -> &'static str {
        match self {
            TableId::BidAskBs => "t1",
            TableId::BidAskCev => "t2",
            TableId::Exchange => "t3",
        }
    }
}

impl fmt::Display for TableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TableId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "t1" | "t1_bidask_bs" => Ok(TableId::BidAskBs),
            "t2" | "t2_bidask_cev" => Ok(TableId::BidAskCev),
            "t3" | "t3_exchange" => Ok(TableId::Exchange),
            other => Err(Error::invalid(format!("unknown table {other:?} (expected t1, t2 or t3)"))),
        }
    }
}

/// One cell: computed price next to the published one.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub table: TableId,
    pub method: String,
    pub param: String,
    pub computed: f64,
    pub reference: f64,
    pub build_seconds: f64,
    pub solve_seconds: f64,
    pub provenance: String,
}

impl ExperimentRow {
    pub fn abs_error(&self) -> f64 {
        (self.computed - self.reference).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentResult {
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentResult {
    /// CSV with header `table,method,param,computed,reference,abs_error,build_s,solve_s,provenance`.
    /// Without `timings` the two time columns are left empty so repeated runs compare byte for byte.
    pub fn to_csv(&self, timings: bool) -> String {
        let mut s = String::from("table,method,param,computed,reference,abs_error,build_s,solve_s,provenance\n");
        for r in &self.rows {
            let (b, t) = if timings {
                (format!("{:.3}", r.build_seconds), format!("{:.3}", r.solve_seconds))
            } else {
                (String::new(), String::new())
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{b},{t},{}",
                r.table,
                r.method,
                r.param,
                fmt_f64(r.computed),
                fmt_f64(r.reference),
                fmt_f64(r.abs_error()),
                r.provenance
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path, timings: bool) -> Result<()> {
        write_atomic(path, &self.to_csv(timings))
    }

    pub fn rows_for<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a ExperimentRow> + 'a {
        self.rows.iter().filter(move |r| r.method == method)
    }

    pub fn mean_abs_error(&self, method: &str) -> f64 {
        let (s, n) = self.rows_for(method).fold((0.0, 0usize), |(s, n), r| (s + r.abs_error(), n + 1));
        s / n.max(1) as f64
    }

    pub fn max_abs_error(&self) -> f64 {
        self.rows.iter().map(ExperimentRow::abs_error).fold(0.0, f64::max)
    }
}

/// Black-Scholes Euler model of the first table.
pub fn bidask_bs_model(steps: usize) -> Result<EulerModel> {
    EulerModel::new(ModelKind::BlackScholesEuler { mu: 0.05, sigma: 0.2 }, 0.25, steps, vec![100.0])
}

/// CEV Euler model of the second table.
pub fn bidask_cev_model(steps: usize) -> Result<EulerModel> {
    EulerModel::new(
        ModelKind::CevEuler {
            mu: 0.05,
            vartheta: 4.0,
            delta: 0.5,
        },
        0.25,
        steps,
        vec![100.0],
    )
}

/// Correlated two-asset model of the third table.
pub fn exchange_model(x0_2: f64, rho: f64) -> Result<EulerModel> {
    EulerModel::new(ModelKind::CorrelatedBs2d { r: 0.0, sigma: 0.2, rho }, 1.0, 10, vec![40.0, x0_2])
}

pub fn bidask_call(model: &EulerModel, strike: f64) -> RbsdeProblem {
    RbsdeProblem::american(
        Driver::BidAsk {
            r: 0.01,
            big_r: 0.06,
            model: model.clone(),
        },
        Payoff::Call { strike },
    )
}

pub fn exchange_option() -> RbsdeProblem {
    RbsdeProblem::american(Driver::Zero, Payoff::Exchange { lambda: 0.05 })
}

struct Strip {
    prices: Vec<f64>,
    build: f64,
    solve: Vec<f64>,
}

fn strike_strip(model: &EulerModel, method: TreeMethod, n: usize, cfg: &BuildConfig) -> Result<Strip> {
    let t0 = Instant::now();
    let tree = build_tree(model, method, &vec![n; model.steps()], cfg)?;
    let build = t0.elapsed().as_secs_f64();
    let mut prices = Vec::with_capacity(STRIKES.len());
    let mut solve = Vec::with_capacity(STRIKES.len());
    for &k in &STRIKES {
        let t0 = Instant::now();
        prices.push(solve_bdpp(&tree, &bidask_call(model, k))?.price);
        solve.push(t0.elapsed().as_secs_f64());
    }
    Ok(Strip { prices, build, solve })
}

fn with_mode(cfg: &BuildConfig, mode: TransitionMode) -> BuildConfig {
    BuildConfig {
        transition_mode: mode,
        ..cfg.clone()
    }
}

fn bidask_table(id: TableId, cfg: &BuildConfig) -> Result<ExperimentResult> {
    let (model, n, marginal_modes, published, provenance): (_, _, [TransitionMode; 2], _, _) = match id {
        TableId::BidAskBs => (
            bidask_bs_model(20)?,
            100,
            [TransitionMode::ExactQuadrature, TransitionMode::GApprox],
            &T1_VALUES,
            "published table 1",
        ),
        _ => (
            bidask_cev_model(15)?,
            150,
            [TransitionMode::MonteCarlo, TransitionMode::MonteCarlo],
            &T2_VALUES,
            "published table 2",
        ),
    };
    let runs = [
        (TreeMethod::Recursive, cfg.clone()),
        (TreeMethod::GreedyRecursive, cfg.clone()),
        (TreeMethod::Optimal, with_mode(cfg, marginal_modes[0])),
        (TreeMethod::Greedy, with_mode(cfg, marginal_modes[1])),
    ];
    let mut strips = Vec::with_capacity(5);
    for (method, c) in &runs {
        strips.push(strike_strip(&model, *method, n, c)?);
    }
    // extrapolation from optimal grids of sizes 1000 and 500 on 5 steps
    let short = model.with_steps(5)?;
    let rc = with_mode(cfg, marginal_modes[0]);
    let big = strike_strip(&short, TreeMethod::Optimal, 1000, &rc)?;
    let half = strike_strip(&short, TreeMethod::Optimal, 500, &rc)?;
    let prices = big
        .prices
        .iter()
        .zip(&half.prices)
        .map(|(a, b)| romberg_extrapolate(*a, *b, 1000, 500))
        .collect::<Result<Vec<_>>>()?;
    strips.push(Strip {
        prices,
        build: big.build + half.build,
        solve: big.solve.iter().zip(&half.solve).map(|(a, b)| a + b).collect(),
    });

    let mut out = ExperimentResult::default();
    for ((name, refs), strip) in published.iter().zip(&strips) {
        for (s, &k) in STRIKES.iter().enumerate() {
            out.rows.push(ExperimentRow {
                table: id,
                method: name.to_string(),
                param: format!("K={k}"),
                computed: strip.prices[s],
                reference: refs[s],
                build_seconds: strip.build,
                solve_seconds: strip.solve[s],
                provenance: provenance.into(),
            });
        }
    }
    Ok(out)
}

fn exchange_table(cfg: &BuildConfig) -> Result<ExperimentResult> {
    let methods = [
        (TreeMethod::Optimal, with_mode(cfg, TransitionMode::MonteCarlo)),
        (TreeMethod::Hybrid, cfg.clone()),
        (TreeMethod::Greedy, with_mode(cfg, TransitionMode::MonteCarlo)),
    ];
    let mut out = ExperimentResult::default();
    for ((method, c), (name, refs)) in methods.iter().zip(&T3_VALUES) {
        for (p, &(x2, rho)) in EXCHANGE_PARAMS.iter().enumerate() {
            let model = exchange_model(x2, rho)?;
            let t0 = Instant::now();
            let tree = build_tree(&model, *method, &[100; 10], c)?;
            let build = t0.elapsed().as_secs_f64();
            let t0 = Instant::now();
            let y = solve_bdpp(&tree, &exchange_option())?.price;
            out.rows.push(ExperimentRow {
                table: TableId::Exchange,
                method: name.to_string(),
                param: format!("x0_2={x2} rho={rho}"),
                computed: y,
                reference: refs[p],
                build_seconds: build,
                solve_seconds: t0.elapsed().as_secs_f64(),
                provenance: "published table 3".into(),
            });
        }
    }
    Ok(out)
}

/// Runs every cell of a table. `cfg` supplies seeds, path counts and the
/// grid cache; transition modes are set per method.
pub fn reproduce_table(id: TableId, cfg: &BuildConfig) -> Result<ExperimentResult> {
    match id {
        TableId::Exchange => exchange_table(cfg),
        _ => bidask_table(id, cfg),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub sizes: Vec<usize>,
    pub prices: Vec<f64>,
    /// Extrapolation from the two largest sizes.
    pub reference: f64,
    pub errors: Vec<f64>,
    /// `None` when every error is below `1e-12`.
    pub slope: Option<f64>,
}

impl ConvergenceStudy {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("N,y0,abs_error\n");
        for ((n, y), e) in self.sizes.iter().zip(&self.prices).zip(&self.errors) {
            let _ = writeln!(s, "{n},{},{}", fmt_f64(*y), fmt_f64(*e));
        }
        s
    }
}

/// Least-squares slope of `log e` against `log N`, skipping errors below `1e-12`.
pub fn fit_log_slope(sizes: &[usize], errors: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = sizes
        .iter()
        .zip(errors)
        .filter(|(_, e)| **e >= 1e-12)
        .map(|(n, e)| ((*n as f64).ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Prices `problem` for every grid size with a fixed number of steps.
pub fn convergence_study(
    model: &EulerModel,
    problem: &RbsdeProblem,
    method: TreeMethod,
    sizes: &[usize],
    cfg: &BuildConfig,
) -> Result<ConvergenceStudy> {
    if sizes.len() < 4 {
        return Err(Error::invalid("a convergence study needs at least 4 sizes"));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("sizes must be strictly increasing"));
    }
    let mut prices = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let tree = build_tree(model, method, &vec![n; model.steps()], cfg)?;
        prices.push(solve_bdpp(&tree, problem)?.price);
    }
    let m = sizes.len();
    let reference = romberg_extrapolate(prices[m - 2], prices[m - 1], sizes[m - 2], sizes[m - 1])?;
    let errors: Vec<f64> = prices.iter().map(|y| (y - reference).abs()).collect();
    let slope = fit_log_slope(sizes, &errors);
    Ok(ConvergenceStudy {
        sizes: sizes.to_vec(),
        prices,
        reference,
        errors,
        slope,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EuropeanCheck {
    pub tree_price: f64,
    pub closed_form: f64,
    pub rel_error: f64,
}

/// Zero-rate Black-Scholes call.
pub fn black_scholes_call(x0: f64, strike: f64, horizon: f64, sigma: f64) -> f64 {
    let v = sigma * horizon.sqrt();
    if v <= 0.0 {
        return (x0 - strike).max(0.0);
    }
    let d1 = ((x0 / strike).ln() + 0.5 * v * v) / v;
    x0 * cdf(d1) - strike * cdf(d1 - v)
}

/// European call on a recursive tree of the exact log-normal step with zero rate,
/// against the closed form.
pub fn european_sanity(
    x0: f64,
    strike: f64,
    horizon: f64,
    sigma: f64,
    steps: usize,
    size: usize,
    cfg: &BuildConfig,
) -> Result<EuropeanCheck> {
    let model = EulerModel::new(ModelKind::BlackScholesExact { mu: 0.0, sigma }, horizon, steps, vec![x0])?;
    let tree = build_recursive_tree_1d(&model, &vec![size; steps], cfg)?;
    let tree_price = solve_bdpp(&tree, &RbsdeProblem::european(Driver::Zero, Payoff::Call { strike }))?.price;
    let closed_form = black_scholes_call(x0, strike, horizon, sigma);
    let rel_error = if closed_form > 0.0 {
        (tree_price - closed_form).abs() / closed_form
    } else {
        (tree_price - closed_form).abs()
    };
    Ok(EuropeanCheck {
        tree_price,
        closed_form,
        rel_error,
    })
}
