use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One mixed sample: `i ← λ·i + (1−λ)·partner`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixRecord {
    pub index: usize,
    pub partner: usize,
    pub lambda: f64,
}

/// `λ·a + (1−λ)·b` elementwise.
pub fn mix_pair(a: &[f32], b: &[f32], lambda: f64) -> Vec<f32> {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (lambda * x as f64 + (1.0 - lambda) * y as f64) as f32)
        .collect()
}

/// Mixes `round(ratio·B)` randomly chosen samples, each with a uniformly drawn
/// partner other than itself, using `λ ~ Beta(alpha, alpha)`. Partners are read
/// from the batch as it was before mixing. Batches of one are left alone.
pub fn mixup<R: Rng + ?Sized>(
    specs: &mut [Tensor<f32>],
    targets: &mut [Vec<f32>],
    ratio: f64,
    alpha: f64,
    rng: &mut R,
) -> Result<Vec<MixRecord>> {
    let b = specs.len();
    if targets.len() != b {
        return Err(Error::dim("mixup", &[b], &[targets.len()]));
    }
    let k = ((ratio * b as f64).round() as usize).min(b);
    if k == 0 || b < 2 {
        return Ok(Vec::new());
    }
    let beta = Beta::new(alpha, alpha)
        .map_err(|e| Error::Config(format!("mixup alpha {alpha}: {e}")))?;
    let chosen = sample(rng, b, k).into_vec();
    let mut records = Vec::with_capacity(k);
    for index in chosen {
        let p = rng.random_range(0..b - 1);
        let partner = if p >= index { p + 1 } else { p };
        records.push(MixRecord {
            index,
            partner,
            lambda: beta.sample(rng),
        });
    }
    let orig_specs = specs.to_vec();
    let orig_targets = targets.to_vec();
    for r in &records {
        let (a, p) = (&orig_specs[r.index], &orig_specs[r.partner]);
        if a.shape() != p.shape() {
            return Err(Error::dim("mixup", a.shape(), p.shape()));
        }
        specs[r.index] = Tensor::new(a.shape().to_vec(), mix_pair(a.data(), p.data(), r.lambda))?;
        targets[r.index] = mix_pair(&orig_targets[r.index], &orig_targets[r.partner], r.lambda);
    }
    Ok(records)
}

/// Placement of one time and one frequency mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaskRecord {
    pub time_start: usize,
    pub time_width: usize,
    pub freq_start: usize,
    pub freq_width: usize,
}

/// Zeroes one band of frames and one band of bins of a `frames × bins`
/// spectrogram. Widths are uniform in `[0, max]`, starts uniform over the
/// positions where the band fits.
pub fn spec_mask<R: Rng + ?Sized>(
    spec: &mut Tensor<f32>,
    time_mask_max: usize,
    freq_mask_max: usize,
    rng: &mut R,
) -> Result<MaskRecord> {
    let (frames, bins) = spec.dims2();
    if time_mask_max > frames || freq_mask_max > bins {
        return Err(Error::Config(format!(
            "mask maxima {time_mask_max}/{freq_mask_max} exceed {frames}x{bins}"
        )));
    }
    let time_width = rng.random_range(0..=time_mask_max);
    let time_start = rng.random_range(0..=frames - time_width);
    let freq_width = rng.random_range(0..=freq_mask_max);
    let freq_start = rng.random_range(0..=bins - freq_width);
    let data = spec.data_mut();
    for t in time_start..time_start + time_width {
        data[t * bins..(t + 1) * bins].fill(0.0);
    }
    for row in data.chunks_mut(bins) {
        row[freq_start..freq_start + freq_width].fill(0.0);
    }
    Ok(MaskRecord {
        time_start,
        time_width,
        freq_start,
        freq_width,
    })
}

/// Per-sample weights `Σ_{c ∈ positives} 1/count(c)`, normalized to sum 1.
/// Labels count as positive when above 0.5.
pub fn balanced_weights(labels: &[Vec<f32>]) -> Result<Vec<f64>> {
    let Some(c) = labels.first().map(Vec::len) else {
        return Err(Error::Input("no samples to weight".into()));
    };
    let mut counts = vec![0usize; c];
    for (i, row) in labels.iter().enumerate() {
        if row.len() != c {
            return Err(Error::dim("balanced_weights", &[c], &[row.len()]));
        }
        let mut any = false;
        for (k, &v) in row.iter().enumerate() {
            if v > 0.5 {
                counts[k] += 1;
                any = true;
            }
        }
        if !any {
            return Err(Error::Input(format!("sample {i} has no positive label")));
        }
    }
    let raw: Vec<f64> = labels
        .iter()
        .map(|row| {
            row.iter()
                .zip(&counts)
                .filter(|(&v, _)| v > 0.5)
                .map(|(_, &n)| 1.0 / n as f64)
                .sum()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}
