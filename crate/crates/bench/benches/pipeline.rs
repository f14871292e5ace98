use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use ugcqa_core::features::{brisque_features, ImagePlane};
use ugcqa_core::{fit_gmm, train_svc, train_svr, EmConfig, Hyperparams};

fn bimodal(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.3).unwrap();
    (0..n)
        .map(|_| if rng.random::<bool>() { 2.0 } else { 4.0 } + noise.sample(&mut rng))
        .collect()
}

fn blobs(n: usize, dim: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let shift = if class == 1 { 1.0 } else { -1.0 };
        let row: Vec<f64> = (0..dim).map(|_| shift + noise.sample(&mut rng)).collect();
        scores.push(row.iter().sum::<f64>() / dim as f64 + 0.1 * noise.sample(&mut rng));
        rows.push(row);
        labels.push(class);
    }
    (rows, labels, scores)
}

fn gmm(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_gmm");
    for n in [1_000, 10_000] {
        let scores = bimodal(n, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &scores, |b, s| {
            b.iter(|| fit_gmm(s, 2, &EmConfig::default()).unwrap())
        });
    }
    group.finish();
}

fn smo(c: &mut Criterion) {
    let mut group = c.benchmark_group("smo");
    group.sample_size(10);
    for n in [200, 800] {
        let (rows, labels, scores) = blobs(n, 36, 2);
        let hp = Hyperparams::rbf(4.0, 1.0 / 36.0);
        group.bench_with_input(BenchmarkId::new("svc", n), &n, |b, _| {
            b.iter(|| train_svc(&rows, &labels, &hp, 0).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("svr", n), &n, |b, _| {
            b.iter(|| train_svr(&rows, &scores, &hp.with_epsilon(0.1), 0).unwrap())
        });
    }
    group.finish();
}

fn brisque(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut group = c.benchmark_group("brisque_features");
    for side in [256usize, 512] {
        let luma: Vec<f64> = (0..side * side)
            .map(|i| {
                let (x, y) = ((i % side) as f64, (i / side) as f64);
                (0.5 + 0.3 * (x / 9.0).sin() * (y / 13.0).cos() + 0.05 * rng.random::<f64>()).clamp(0.0, 1.0)
            })
            .collect();
        let img = ImagePlane::from_luma(side, side, luma).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(side), &img, |b, img| {
            b.iter(|| brisque_features(img).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, gmm, smo, brisque);
criterion_main!(benches);
