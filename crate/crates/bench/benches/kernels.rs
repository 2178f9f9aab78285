use std::hint::black_box;

use cpac_core::metrics::{auc_roc, silhouette};
use cpac_core::smote::knn_minority;
use cpac_core::{ClassLoss, CpacConfig, CpacParams, FocalConfig, Matrix, VaeGan, VaeGanConfig};
use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    Matrix::new(rows, cols, (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

fn matmul(c: &mut Criterion) {
    let a = random(256, 30, 1);
    let b = random(30, 16, 2);
    c.bench_function("matmul 256x30 * 30x16", |bench| bench.iter(|| black_box(&a).matmul(black_box(&b)).unwrap()));
}

fn knn(c: &mut Criterion) {
    let x = random(344, 30, 3);
    c.bench_function("knn k=5 over 344 rows", |bench| bench.iter(|| knn_minority(black_box(&x), 5).unwrap()));
}

fn cpac_step(c: &mut Criterion) {
    let x = random(128, 2, 4);
    let y: Vec<f64> = (0..128).map(|i| f64::from(u8::from(i % 16 == 0))).collect();
    let mut p = CpacParams::new(CpacConfig::new(2), &mut ChaCha8Rng::seed_from_u64(5));
    let loss = ClassLoss::Focal(FocalConfig::default());
    c.bench_function("cpac forward+backward batch 128", |bench| {
        bench.iter(|| p.forward_backward(black_box(&x), &y, &loss).unwrap())
    });
}

fn vaegan_step(c: &mut Criterion) {
    let x = random(64, 30, 6);
    let eps = random(64, 2, 7);
    let mut m = VaeGan::new(VaeGanConfig::new(30)).unwrap();
    c.bench_function("vae-gan generator objective batch 64", |bench| {
        bench.iter(|| m.generator_objective(black_box(&x), &eps).unwrap())
    });
}

fn metrics(c: &mut Criterion) {
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let labels: Vec<u8> = (0..85_443).map(|i| u8::from(i % 577 == 0)).collect();
    let scores: Vec<f64> = (0..labels.len()).map(|_| r.random()).collect();
    c.bench_function("auc 85k rows", |bench| bench.iter(|| auc_roc(black_box(&labels), &scores).unwrap()));

    let z = random(2000, 2, 9);
    let zl: Vec<u8> = (0..2000).map(|i| u8::from(i % 10 == 0)).collect();
    c.bench_function("silhouette 2000 rows", |bench| bench.iter(|| silhouette(black_box(&z), &zl).unwrap()));
}

criterion_group!(benches, matmul, knn, cpac_step, vaegan_step, metrics);
criterion_main!(benches);
