//! Deterministic synthetic audio-tagging corpus.
//!
//! Class `k` of `C` is a tone at a log-spaced frequency between 250 Hz and
//! 4 kHz; odd classes are gated into bursts at a class-specific rate, and
//! every third class carries a noise burst on top. Clips last 1 to 10 s over
//! a faint noise floor.

use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{write_wav, Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::io::manifest::{LabelMap, Manifest, ManifestRow};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    /// Probability that a clip carries a second class.
    pub multi_label_rate: f64,
    /// Every `n`-th clip goes to the `eval` split.
    pub eval_every: Option<usize>,
    pub min_secs: f64,
    pub max_secs: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            multi_label_rate: 0.25,
            eval_every: None,
            min_secs: 1.0,
            max_secs: 10.0,
        }
    }
}

pub fn class_frequency(k: usize, classes: usize) -> f64 {
    if classes < 2 {
        return 1000.0;
    }
    250.0 * 16f64.powf(k as f64 / (classes - 1) as f64)
}

fn class_signal(k: usize, classes: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let f = class_frequency(k, classes);
    let sr = SAMPLE_RATE as f64;
    let phase = rng.random_range(0.0..TAU);
    let burst_hz = 2.0 + k as f64;
    let mut out: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let gate = if k % 2 == 1 {
                if (t * burst_hz).fract() < 0.5 { 1.0 } else { 0.0 }
            } else {
                1.0
            };
            0.3 * gate * (TAU * f * t + phase).sin()
        })
        .collect();
    if k % 3 == 2 {
        let period = 0.25 + 0.05 * k as f64;
        for (i, v) in out.iter_mut().enumerate() {
            let t = i as f64 / sr;
            if (t / period).fract() < 0.3 {
                *v += 0.1 * rng.random_range(-1.0..1.0);
            }
        }
    }
    out
}

/// Writes `n_samples` clips plus `manifest.csv` and `labels.json` into
/// `out_dir`. Every class appears as a primary label when `n_samples ≥ n_classes`.
pub fn synth_dataset(
    n_samples: usize,
    n_classes: usize,
    seed: u64,
    out_dir: &Path,
    opts: &SynthOptions,
) -> Result<(Manifest, LabelMap)> {
    if n_classes < 2 {
        return Err(Error::Config(format!("need at least 2 classes, got {n_classes}")));
    }
    if !(opts.min_secs > 0.0 && opts.min_secs <= opts.max_secs) {
        return Err(Error::Config(format!(
            "clip duration range {}..{} s is invalid",
            opts.min_secs, opts.max_secs
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let secs = (rng.random_range(opts.min_secs..=opts.max_secs) * 10.0).round() / 10.0;
        let n = (secs * SAMPLE_RATE as f64) as usize;
        let mut labels = vec![i % n_classes];
        if rng.random_bool(opts.multi_label_rate.clamp(0.0, 1.0)) {
            let extra = (labels[0] + rng.random_range(1..n_classes)) % n_classes;
            labels.push(extra);
        }
        let mut mix = vec![0.0f64; n];
        for &k in &labels {
            for (m, v) in mix.iter_mut().zip(class_signal(k, n_classes, n, &mut rng)) {
                *m += v;
            }
        }
        let samples = mix
            .iter()
            .map(|v| (v + 0.003 * rng.random_range(-1.0..1.0)) as f32)
            .collect();
        let name = format!("clip_{i:04}.wav");
        write_wav(&out_dir.join(&name), &Waveform::new(samples, SAMPLE_RATE)?)?;
        let split = match opts.eval_every {
            Some(e) if e > 0 && (i + 1) % e == 0 => "eval",
            _ => "train",
        };
        rows.push(ManifestRow {
            path: name.into(),
            labels,
            split: split.into(),
        });
    }
    let manifest = Manifest {
        rows,
        base_dir: out_dir.to_path_buf(),
    };
    manifest.write(&out_dir.join("manifest.csv"))?;
    let names = (0..n_classes)
        .map(|k| format!("class{k}_{:.0}hz", class_frequency(k, n_classes)))
        .collect();
    let labels = LabelMap::new(names)?;
    labels.write(&out_dir.join("labels.json"))?;
    Ok((manifest, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn counts_and_signatures() {
        let dir = tempfile::tempdir().unwrap();
        let (m, labels) = synth_dataset(16, 4, 3, dir.path(), &SynthOptions::default()).unwrap();
        assert_eq!(m.rows.len(), 16);
        assert_eq!(labels.len(), 4);
        let wavs = std::fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "wav"))
            .count();
        assert_eq!(wavs, 16);
        let primaries: HashSet<usize> = m.rows.iter().map(|r| r.labels[0]).collect();
        assert_eq!(primaries.len(), 4);
        m.validate(&labels).unwrap();
        for r in &m.rows {
            let w = crate::dsp::read_wav(&m.resolve(r)).unwrap();
            assert!((1.0..=10.0).contains(&w.duration_secs()));
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let opts = SynthOptions {
            max_secs: 2.0,
            ..SynthOptions::default()
        };
        synth_dataset(5, 3, 11, a.path(), &opts).unwrap();
        synth_dataset(5, 3, 11, b.path(), &opts).unwrap();
        for name in ["clip_0000.wav", "clip_0004.wav", "manifest.csv", "labels.json"] {
            let x = std::fs::read(a.path().join(name)).unwrap();
            let y = std::fs::read(b.path().join(name)).unwrap();
            assert_eq!(x, y, "{name}");
        }
    }

    #[test]
    fn rejects_single_class() {
        let dir = tempfile::tempdir().unwrap();
        assert!(synth_dataset(4, 1, 0, dir.path(), &SynthOptions::default()).is_err());
    }
}
