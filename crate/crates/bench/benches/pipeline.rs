use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use vng_core::certify::{certify, extract_dual, verify_rapid, CertifyOptions, CERT_TOL};
use vng_core::generate::{binary, chain, kelly, random_problem, GeneratorLimits};
use vng_core::solver::{solve_log_optimal, PathProblem, SolveOptions};

fn problems() -> Vec<(&'static str, PathProblem)> {
    vec![
        ("kelly", kelly()),
        ("chain-6x3", chain(6, 3)),
        ("binary-4x2", binary(4, 2, 0.01, 1.5)),
        ("binary-6x3", binary(6, 3, 0.01, 1.6)),
        ("random-7", random_problem(7, &GeneratorLimits::default()).unwrap()),
    ]
}

fn solve(c: &mut Criterion) {
    let opts = SolveOptions::default();
    let mut g = c.benchmark_group("solve");
    for (name, p) in problems() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &p, |b, p| {
            b.iter(|| solve_log_optimal(black_box(p), &opts).unwrap())
        });
    }
    g.finish();
}

fn certify_pipeline(c: &mut Criterion) {
    let mut g = c.benchmark_group("certify");
    for (name, p) in problems() {
        let s = solve_log_optimal(&p, &SolveOptions::default()).unwrap();
        let d = extract_dual(&p, &s).unwrap();
        g.bench_function(BenchmarkId::new("verify", name), |b| {
            b.iter(|| verify_rapid(black_box(&s.path), &d, &p.tree, &p.market, CERT_TOL).unwrap())
        });
        let opts = CertifyOptions {
            competitors: 50,
            ..CertifyOptions::default()
        };
        g.bench_function(BenchmarkId::new("full", name), |b| b.iter(|| certify(&p, black_box(&s), &opts).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, solve, certify_pipeline);
criterion_main!(benches);
