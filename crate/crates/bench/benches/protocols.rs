use cclab::disj::{disj_bounded_info, disj_product, fingerprint_equality, hjmr_transmit, RoundsMode};
use cclab::dist::{iid_product, make_razborov, make_sparse_fn, RazborovParams, Variant};
use cclab::sparse::{sparse_logd_run, ZeroInputs};
use cclab::{monte_carlo, CommProblem, PublicCoin};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn product_disj(c: &mut Criterion) {
    let mut g = c.benchmark_group("disj_product/1000 trials");
    for n in [256usize, 1024, 4096] {
        let mu = iid_product(n, 1.0 / (n as f64).sqrt()).unwrap();
        let p = disj_product(&mu, 0.1).unwrap();
        let problem = CommProblem::disj(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| monte_carlo(&p, &problem, &mu, 1000, 7, Some(1)).unwrap())
        });
    }
    g.finish();
}

fn bounded_info(c: &mut Criterion) {
    let mut g = c.benchmark_group("disj_bounded_info/1000 trials");
    g.sample_size(10);
    for n in [15usize, 31, 63] {
        let mu = make_razborov(RazborovParams::new(n, 1.0).unwrap(), Variant::Mu).unwrap();
        let p = disj_bounded_info(&mu, 1.0, 0.1, RoundsMode::Unbounded).unwrap();
        let problem = CommProblem::disj(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| monte_carlo(&p, &problem, &mu, 1000, 7, Some(1)).unwrap())
        });
    }
    g.finish();
}

fn fingerprint(c: &mut Criterion) {
    let mu = iid_product(64, 0.5).unwrap();
    let p = fingerprint_equality(10).unwrap();
    let problem = CommProblem::eq(64);
    c.bench_function("fingerprint_eq/n=64/10000 trials", |b| {
        b.iter(|| monte_carlo(&p, &problem, &mu, 10_000, 3, Some(1)).unwrap())
    });
}

fn sparse_logd(c: &mut Criterion) {
    let inst = make_sparse_fn(12, 100.0, 1).unwrap();
    let p = sparse_logd_run(&inst.problem, 100.0).unwrap();
    let zeros = ZeroInputs { matrix: inst.matrix.clone() };
    c.bench_function("sparse_logd/n=12/10000 trials", |b| {
        b.iter(|| monte_carlo(&p, &inst.problem, &zeros, 10_000, 5, Some(1)).unwrap())
    });
}

fn rejection_sampling(c: &mut Criterion) {
    let target: Vec<f64> = (1..=16).map(|i| (i * i) as f64 / 1496.0).collect();
    let base = vec![1.0 / 16.0; 16];
    let mut seed = 0u64;
    c.bench_function("hjmr_transmit/16 points", |b| {
        b.iter(|| {
            seed += 1;
            hjmr_transmit(&target, &base, &mut PublicCoin::new(seed)).unwrap()
        })
    });
}

criterion_group!(benches, product_disj, bounded_info, fingerprint, sparse_logd, rejection_sampling);
criterion_main!(benches);
