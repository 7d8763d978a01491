use cclab::oracle::{exact_dcc, razborov_info_exact, uniform_masses};
use cclab::DenseMatrix;
use criterion::{criterion_group, criterion_main, Criterion};
use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dcc(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let bits: Vec<bool> = (0..64).map(|_| rng.gen()).collect();
    let m4 = DenseMatrix::from_fn(4, 4, |r, c| bits[r * 4 + c]);
    let m8 = DenseMatrix::from_fn(8, 8, |r, c| bits[r * 8 + c]);
    let eps = Rational64::new(1, 8);
    c.bench_function("exact_dcc/4x4", |b| b.iter(|| exact_dcc(&m4, &uniform_masses(4, 4), eps).unwrap()));
    let mut g = c.benchmark_group("exact_dcc/8x8");
    g.sample_size(10);
    g.bench_function("uniform", |b| b.iter(|| exact_dcc(&m8, &uniform_masses(8, 8), eps).unwrap()));
    g.finish();
}

fn razborov(c: &mut Criterion) {
    c.bench_function("razborov_info_exact/63,4", |b| b.iter(|| razborov_info_exact(63, 4.0).unwrap()));
}

criterion_group!(benches, dcc, razborov);
criterion_main!(benches);
