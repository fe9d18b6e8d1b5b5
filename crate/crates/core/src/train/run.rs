use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{balanced_weights, lr_at, mixup, spec_mask, TrainConfig};
use super::{adam_step, OptimizerState, WeightAverager};
use crate::dsp::Spectrogram;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalResult};
use crate::model::{forward_tape, loss_on_tape, register, AstConfig, AstParams};
use crate::patchify::extract_patches;
use crate::tensor::{Tape, Tensor};

/// Padded, normalized inputs with one target row each.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Spectrogram>,
    pub targets: Vec<Vec<f32>>,
}

impl Dataset {
    pub fn new(inputs: Vec<Spectrogram>, targets: Vec<Vec<f32>>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::Input(format!(
                "{} inputs but {} target rows",
                inputs.len(),
                targets.len()
            )));
        }
        Ok(Dataset { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn validate(&self, model: &AstConfig) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Input("dataset is empty".into()));
        }
        for (i, (s, t)) in self.inputs.iter().zip(&self.targets).enumerate() {
            if s.frames() != model.target_frames || s.n_mels() != model.n_mels {
                return Err(Error::Input(format!(
                    "sample {i} is {}x{}, model expects {}x{}",
                    s.frames(),
                    s.n_mels(),
                    model.target_frames,
                    model.n_mels
                )));
            }
            if t.len() != model.num_classes {
                return Err(Error::Input(format!(
                    "sample {i} has {} targets, model has {} classes",
                    t.len(),
                    model.num_classes
                )));
            }
        }
        Ok(())
    }

    /// Targets as a `B × C` matrix.
    pub fn target_matrix(&self) -> Result<Tensor<f32>> {
        Tensor::from_rows(&self.targets)
    }
}

/// One line of the metric log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// mAP in multi-label mode, accuracy otherwise.
    pub eval_metric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub last: AstParams,
    pub averaged: AstParams,
    pub log: Vec<EpochRecord>,
}

/// Mean loss over the batch and the matching mean gradient.
///
/// Every sample runs on its own tape; gradients are summed in batch order so
/// the result does not depend on the thread count.
pub fn batch_gradients(
    params: &AstParams,
    config: &AstConfig,
    specs: &[Tensor<f32>],
    targets: &[Vec<f32>],
) -> Result<(f64, AstParams)> {
    if specs.is_empty() || specs.len() != targets.len() {
        return Err(Error::Input(format!(
            "batch of {} inputs and {} targets",
            specs.len(),
            targets.len()
        )));
    }
    let per_sample = crate::par::map_range(specs.len(), |i| -> Result<(f32, AstParams)> {
        let s = Spectrogram::new(specs[i].clone())?;
        let patches = extract_patches(&s, &config.patch)?;
        let mut tape = Tape::new();
        let vars = register(&mut tape, params, true);
        let x = tape.constant(patches);
        let pass = forward_tape(&mut tape, x, &vars, config)?;
        let loss = loss_on_tape(&mut tape, &pass, &targets[i], config)?;
        let value = tape.value(loss).data()[0];
        let mut grads = tape.backward(loss)?;
        let g = vars.zip_map(params, |_, v, p| {
            Ok(grads.take(*v).unwrap_or_else(|| Tensor::zeros(p.shape().to_vec())))
        })?;
        Ok((value, g))
    });
    let n = specs.len() as f64;
    let mut total = 0.0f64;
    let mut sum: Option<AstParams<f64>> = None;
    for r in per_sample {
        let (loss, g) = r?;
        total += loss as f64;
        sum = Some(match sum {
            None => g.cast(),
            Some(acc) => acc.zip_map(&g, |_, a, b| {
                let mut out = a.clone();
                for (x, &y) in out.data_mut().iter_mut().zip(b.data()) {
                    *x += y as f64;
                }
                Ok(out)
            })?,
        });
    }
    let grads = sum.expect("non-empty batch").map(|t| t.map(|v| v / n).cast());
    Ok((total / n, grads))
}

/// Scores for every input, `B × C`.
pub fn predict_batch(params: &AstParams, config: &AstConfig, inputs: &[Spectrogram]) -> Result<Tensor<f32>> {
    if inputs.is_empty() {
        return Err(Error::Input("nothing to score".into()));
    }
    let rows = crate::par::map(inputs, |s| crate::model::forward(s, params, config).map(Tensor::into_data));
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Tensor::from_rows(&rows)
}

pub fn evaluate_params(params: &AstParams, config: &AstConfig, data: &Dataset) -> Result<EvalResult> {
    let scores = predict_batch(params, config, &data.inputs)?;
    evaluate(&scores, &data.target_matrix()?, config.multi_label)
}

fn headline(r: &EvalResult) -> f64 {
    r.accuracy.unwrap_or(r.map)
}

/// Runs the full recipe. `on_epoch` sees each epoch's record and weights
/// after the update. With zero epochs the initial weights come back unchanged.
pub fn train(
    model: &AstConfig,
    config: &TrainConfig,
    data: &Dataset,
    initial: &AstParams,
    eval: Option<&Dataset>,
    mut on_epoch: impl FnMut(&EpochRecord, &AstParams) -> Result<()>,
) -> Result<TrainOutcome> {
    model.validate()?;
    config.validate(model)?;
    initial.validate(model)?;
    data.validate(model)?;
    if let Some(e) = eval {
        e.validate(model)?;
    }
    let eval = eval.unwrap_or(data);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sampler = if config.balanced_sampling {
        Some(WeightedIndex::new(balanced_weights(&data.targets)?).map_err(|e| Error::Input(format!("sampling weights: {e}")))?)
    } else {
        None
    };
    let mut params = initial.clone();
    let mut opt = OptimizerState::new(&params);
    let mut avg = WeightAverager::new();
    let mut log = Vec::with_capacity(config.epochs);
    let n = data.len();

    for epoch in 1..=config.epochs {
        let lr = lr_at(epoch, config);
        let order: Vec<usize> = match &sampler {
            Some(w) => (0..n).map(|_| w.sample(&mut rng)).collect(),
            None => {
                let mut o: Vec<usize> = (0..n).collect();
                o.shuffle(&mut rng);
                o
            }
        };
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let mut specs: Vec<Tensor<f32>> = idx.iter().map(|&i| data.inputs[i].values.clone()).collect();
            let mut targets: Vec<Vec<f32>> = idx.iter().map(|&i| data.targets[i].clone()).collect();
            mixup(&mut specs, &mut targets, config.mixup_ratio, config.mixup_alpha, &mut rng)?;
            if config.time_mask_max > 0 || config.freq_mask_max > 0 {
                for s in &mut specs {
                    spec_mask(s, config.time_mask_max, config.freq_mask_max, &mut rng)?;
                }
            }
            let (loss, grads) = batch_gradients(&params, model, &specs, &targets)?;
            if !loss.is_finite() || grads.slots().iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite loss or gradient at epoch {epoch}, batch {} (loss {loss})",
                    b + 1
                )));
            }
            loss_sum += loss * idx.len() as f64;
            adam_step(&mut params, &grads, &mut opt, lr)?;
        }
        if params.slots().iter().any(|t| !t.is_finite()) {
            return Err(Error::Numeric(format!("weights became non-finite in epoch {epoch}")));
        }
        if config.averages_epoch(epoch) {
            avg.add(&params)?;
        }
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / n as f64,
            eval_metric: headline(&evaluate_params(&params, model, eval)?),
        };
        on_epoch(&record, &params)?;
        log.push(record);
    }
    let averaged = if avg.count() > 0 { avg.finish()? } else { params.clone() };
    Ok(TrainOutcome {
        last: params,
        averaged,
        log,
    })
}
