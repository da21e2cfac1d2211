use criterion::{black_box, criterion_group, criterion_main, Criterion};
use quantree::harness::bidask_call;
use quantree::quantizer::{lloyd_mixture_1d, LloydConfig};
use quantree::tree::{build_hybrid_tree, build_recursive_tree_1d};
use quantree::{solve_bdpp, BuildConfig};
use quantree_bench::{bs_model, recursive_tree, step_mixture};

fn lloyd(c: &mut Criterion) {
    let mix = step_mixture(100);
    c.bench_function("lloyd_mixture_100", |b| {
        b.iter(|| lloyd_mixture_1d(black_box(&mix), 100, &LloydConfig::default()).unwrap())
    });
}

fn trees(c: &mut Criterion) {
    let m = bs_model(20);
    let cfg = BuildConfig::default();
    let mut g = c.benchmark_group("trees");
    g.sample_size(10);
    g.bench_function("recursive_20x100", |b| b.iter(|| build_recursive_tree_1d(&m, &[100; 20], &cfg).unwrap()));
    let short = bs_model(5);
    g.bench_function("hybrid_5x100", |b| b.iter(|| build_hybrid_tree(&short, &[100; 5], &cfg).unwrap()));
    g.finish();
}

fn solve(c: &mut Criterion) {
    let (m, tree) = recursive_tree(20, 100);
    let p = bidask_call(&m, 100.0);
    c.bench_function("bdpp_bidask_20x100", |b| b.iter(|| solve_bdpp(black_box(&tree), &p).unwrap().price));
}

criterion_group!(benches, lloyd, trees, solve);
criterion_main!(benches);
