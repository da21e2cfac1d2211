use std::path::PathBuf;

use quantree::harness::{bidask_bs_model, bidask_call, exchange_model, exchange_option};
use quantree::tree::{build_recursive_tree_1d, load_tree, save_tree};
use quantree::{price, romberg_extrapolate, solve_bdpp, BuildConfig, Payoff, RbsdeProblem, TransitionMode, TreeMethod};

fn cached() -> BuildConfig {
    BuildConfig {
        grid_cache: Some(PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("normal-grid-cache")),
        ..BuildConfig::default()
    }
}

#[test]
fn recursive_bidask_strikes() {
    let m = bidask_bs_model(20).unwrap();
    let tree = build_recursive_tree_1d(&m, &[100; 20], &BuildConfig::default()).unwrap();
    for (k, published) in [(100.0, 4.719), (110.0, 1.222), (120.0, 0.203)] {
        let y = solve_bdpp(&tree, &bidask_call(&m, k)).unwrap().price;
        assert!((y - published).abs() <= 0.05, "K={k}: {y}");
    }
}

#[test]
fn price_reports_timings_and_dispatches() {
    let m = bidask_bs_model(20).unwrap();
    let r = price(&m, &bidask_call(&m, 105.0), TreeMethod::GreedyRecursive, &[100; 20], &BuildConfig::default()).unwrap();
    assert!((r.price() - 2.548).abs() <= 0.05, "{}", r.price());
    assert!(r.build_seconds > 0.0 && r.solve_seconds >= 0.0);
    assert_eq!(r.tree_meta.method, "grq");

    let gq = BuildConfig {
        transition_mode: TransitionMode::GApprox,
        ..BuildConfig::default()
    };
    let r = price(&m, &bidask_call(&m, 115.0), TreeMethod::Greedy, &[100; 20], &gq).unwrap();
    assert!((r.price() - 0.518).abs() <= 0.05, "{}", r.price());

    let ex = exchange_model(36.0, 0.0).unwrap();
    let e = price(&ex, &exchange_option(), TreeMethod::Recursive, &[10; 10], &BuildConfig::default()).unwrap_err();
    assert_eq!(e.category(), "invalid-argument");
}

#[test]
fn romberg_benchmark_at_the_money() {
    let m = bidask_bs_model(20).unwrap().with_steps(5).unwrap();
    let p = bidask_call(&m, 100.0);
    let cfg = BuildConfig::default();
    let a = price(&m, &p, TreeMethod::Optimal, &[1000; 5], &cfg).unwrap().price();
    let b = price(&m, &p, TreeMethod::Optimal, &[500; 5], &cfg).unwrap().price();
    let y = romberg_extrapolate(a, b, 1000, 500).unwrap();
    assert!((y - 4.745).abs() <= 0.05, "{y}");
}

#[test]
fn hybrid_exchange_option() {
    let m = exchange_model(36.0, -0.8).unwrap();
    let r = price(&m, &exchange_option(), TreeMethod::Hybrid, &[100; 10], &cached()).unwrap();
    assert!((r.price() - 6.975).abs() <= 0.15, "{}", r.price());
    assert!((r.price() - 6.979).abs() <= 0.15);
    // z carries both noise components
    assert_eq!(r.solution.z[0].len(), 2);
}

#[test]
fn larger_payoff_gives_larger_values() {
    let m = bidask_bs_model(20).unwrap();
    let tree = build_recursive_tree_1d(&m, &[60; 20], &BuildConfig::default()).unwrap();
    let hi = solve_bdpp(&tree, &bidask_call(&m, 100.0)).unwrap();
    let lo = solve_bdpp(&tree, &bidask_call(&m, 110.0)).unwrap();
    for k in 0..=20 {
        for (a, b) in hi.y[k].iter().zip(&lo.y[k]) {
            assert!(a >= b, "step {k}: {a} < {b}");
        }
    }
}

#[test]
fn saved_tree_gives_identical_price() {
    let m = bidask_bs_model(10).unwrap();
    let tree = build_recursive_tree_1d(&m, &[40; 10], &BuildConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_tree(&tree, dir.path()).unwrap();
    let back = load_tree(dir.path()).unwrap();
    let p = RbsdeProblem::american(bidask_call(&m, 100.0).driver, Payoff::Call { strike: 100.0 });
    let a = solve_bdpp(&tree, &p).unwrap();
    let b = solve_bdpp(&back, &p).unwrap();
    assert_eq!(a.price.to_bits(), b.price.to_bits());
    assert_eq!(a.to_csv(&tree), b.to_csv(&back));
}
