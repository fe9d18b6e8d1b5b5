//! Parallel kernels on the rayon pool against the same code on one thread.
//!
//! `cargo bench -p ast-core` compares thread counts; building with
//! `--no-default-features` benches the sequential fallback.

use std::hint::black_box;

use ast_core::dsp::Spectrogram;
use ast_core::metrics::map_score;
use ast_core::model::{forward, AstConfig, AstParams};
use ast_core::patchify::PatchSpec;
use ast_core::tensor::Tensor;
use ast_core::train::batch_gradients;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::ThreadPool;

fn pools() -> Vec<(String, ThreadPool)> {
    let n = rayon::current_num_threads().max(2);
    [1, n]
        .into_iter()
        .map(|k| (format!("{k}-thread"), rayon::ThreadPoolBuilder::new().num_threads(k).build().unwrap()))
        .collect()
}

fn random(shape: [usize; 2], rng: &mut ChaCha8Rng) -> Tensor<f32> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn kernels(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a = random([512, 256], &mut rng);
    let b = random([256, 512], &mut rng);

    let model = AstConfig {
        patch: PatchSpec::square(16, 6).unwrap(),
        target_frames: 512,
        ..AstConfig::tiny(10)
    };
    let params = AstParams::init(&model, &mut rng).unwrap();
    let spec = Spectrogram::new(random([512, 128], &mut rng)).unwrap();

    let batch: Vec<Tensor<f32>> = (0..8).map(|_| random([128, 128], &mut rng)).collect();
    let targets: Vec<Vec<f32>> = (0..8).map(|i| (0..4).map(|k| ((i + k) % 2) as f32).collect()).collect();
    let tiny = AstConfig::tiny(4);
    let tiny_params = AstParams::init(&tiny, &mut rng).unwrap();

    let scores = random([2000, 100], &mut rng);
    let labels = Tensor::from_fn([2000, 100], |_| if rng.random_bool(0.1) { 1.0 } else { 0.0 });

    let mut g = c.benchmark_group("kernels");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new("matmul_512x256x512", &name), |bch| {
            pool.install(|| bch.iter(|| black_box(a.matmul(&b).unwrap())))
        });
        g.bench_function(BenchmarkId::new("forward_600_tokens", &name), |bch| {
            pool.install(|| bch.iter(|| black_box(forward(&spec, &params, &model).unwrap())))
        });
        g.bench_function(BenchmarkId::new("batch_gradients_8", &name), |bch| {
            pool.install(|| bch.iter(|| black_box(batch_gradients(&tiny_params, &tiny, &batch, &targets).unwrap())))
        });
        g.bench_function(BenchmarkId::new("map_2000x100", &name), |bch| {
            pool.install(|| bch.iter(|| black_box(map_score(&scores, &labels).unwrap())))
        });
    }
    g.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
