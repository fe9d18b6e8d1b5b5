//! Results do not depend on the number of worker threads.
#![cfg(feature = "parallel")]

use ast_core::dsp::Spectrogram;
use ast_core::model::{AstConfig, AstParams};
use ast_core::tensor::Tensor;
use ast_core::train::{predict_batch, train, Averaging, Dataset, LossKind, Schedule, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setup() -> (AstConfig, TrainConfig, Dataset, AstParams) {
    let model = AstConfig {
        depth: 2,
        ..AstConfig::tiny(3)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let inputs = (0..10)
        .map(|_| Spectrogram::new(Tensor::from_fn([128, 128], |_| rng.random_range(-1.0..1.0))).unwrap())
        .collect();
    let targets = (0..10).map(|i| (0..3).map(|c| ((i + c) % 2) as f32).collect()).collect();
    let cfg = TrainConfig {
        batch_size: 4,
        epochs: 2,
        initial_lr: 1e-3,
        schedule: Schedule::Constant,
        mixup_ratio: 0.5,
        mixup_alpha: 10.0,
        time_mask_max: 20,
        freq_mask_max: 10,
        balanced_sampling: true,
        loss: LossKind::Bce,
        averaging: Averaging::All,
        seed: 8,
    };
    let init = AstParams::init(&model, &mut rng).unwrap();
    (model, cfg, Dataset::new(inputs, targets).unwrap(), init)
}

fn run_with(threads: usize) -> (Vec<u8>, Vec<f32>) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let (model, cfg, data, init) = setup();
        let out = train(&model, &cfg, &data, &init, None, |_, _| Ok(())).unwrap();
        let log = serde_json::to_vec(&out.log).unwrap();
        let mut weights = Vec::new();
        for t in out.averaged.slots() {
            weights.extend_from_slice(t.data());
        }
        weights.extend(predict_batch(&out.last, &model, &data.inputs).unwrap().into_data());
        (log, weights)
    })
}

#[test]
fn one_thread_and_many_threads_agree_bitwise() {
    let (log1, w1) = run_with(1);
    let (log4, w4) = run_with(4);
    assert_eq!(log1, log4);
    assert_eq!(w1.len(), w4.len());
    assert!(w1.iter().zip(&w4).all(|(a, b)| a.to_bits() == b.to_bits()));
}
