//! Waveform to log-Mel filterbank frontend.
//!
//! Frames are 25 ms periodic-Hamming windows every 10 ms; each frame's power
//! spectrum goes through a triangular HTK-scale Mel filterbank spanning 0 Hz
//! to Nyquist and is log-compressed with a `1e-10` floor.

use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::Tensor;

pub const SAMPLE_RATE: u32 = 16_000;
pub const N_MELS: usize = 128;
pub const WIN_MS: f64 = 25.0;
pub const HOP_MS: f64 = 10.0;
pub const LOG_FLOOR: f64 = 1e-10;

/// Smallest corpus standard deviation [`CorpusStats::compute`] reports.
pub const STD_FLOOR: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Input("sample rate must be positive".into()));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Log filterbank energies, `frames × n_mels`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    pub values: Tensor<f32>,
    pub frame_shift_ms: f32,
    pub normalized: bool,
}

impl Spectrogram {
    pub fn new(values: Tensor<f32>) -> Result<Self> {
        if values.rank() != 2 {
            return Err(Error::Input(format!(
                "spectrogram must be frames × bins, got {:?}",
                values.shape()
            )));
        }
        Ok(Spectrogram {
            values,
            frame_shift_ms: HOP_MS as f32,
            normalized: false,
        })
    }

    pub fn frames(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn n_mels(&self) -> usize {
        self.values.shape()[1]
    }

    /// Cell at `(frame, bin)`.
    pub fn at(&self, frame: usize, bin: usize) -> f32 {
        self.values.data()[frame * self.n_mels() + bin]
    }
}

fn samples_for(ms: f64, sample_rate: u32) -> usize {
    (ms * sample_rate as f64 / 1000.0).round() as usize
}

/// Periodic Hamming window, `0.54 − 0.46·cos(2πn/N)`.
pub fn hamming(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos())
        .collect()
}

/// Number of frames for `len` samples: `floor((len − win)/hop) + 1`, with
/// inputs shorter than one window counting as a single padded frame.
pub fn frame_count(len: usize, win: usize, hop: usize) -> usize {
    if len <= win {
        1
    } else {
        (len - win) / hop + 1
    }
}

/// Windowed frames, `frames × window_samples`.
pub fn frame_and_window(w: &Waveform, win_ms: f64, hop_ms: f64) -> Result<Tensor<f32>> {
    if w.samples.is_empty() {
        return Err(Error::Input("empty waveform".into()));
    }
    if win_ms < hop_ms || hop_ms <= 0.0 {
        return Err(Error::Input(format!(
            "window {win_ms} ms must be at least the hop {hop_ms} ms"
        )));
    }
    let win = samples_for(win_ms, w.sample_rate);
    let hop = samples_for(hop_ms, w.sample_rate).max(1);
    let n = frame_count(w.samples.len(), win, hop);
    let window = hamming(win);
    let mut out = vec![0f32; n * win];
    par::for_each_row(&mut out, win, |f, row| {
        let start = f * hop;
        for (k, o) in row.iter_mut().enumerate() {
            let s = w.samples.get(start + k).copied().unwrap_or(0.0) as f64;
            *o = (s * window[k]) as f32;
        }
    });
    Tensor::new([n, win], out)
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters with unit peaks, edges equally spaced on the Mel scale.
#[derive(Clone, Debug)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub n_fft: usize,
    /// `n_mels × (n_fft/2 + 1)` weights.
    pub weights: Vec<f64>,
    pub centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, n_fft: usize, sample_rate: u32) -> Self {
        let n_bins = n_fft / 2 + 1;
        let nyquist = sample_rate as f64 / 2.0;
        let (lo, hi) = (hz_to_mel(0.0), hz_to_mel(nyquist));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let mut weights = vec![0.0; n_mels * n_bins];
        for m in 0..n_mels {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..n_bins {
                let f = k as f64 * sample_rate as f64 / n_fft as f64;
                let w = if f > left && f <= center {
                    (f - left) / (center - left)
                } else if f > center && f < right {
                    (right - f) / (right - center)
                } else {
                    0.0
                };
                weights[m * n_bins + k] = w;
            }
        }
        MelFilterbank {
            n_mels,
            n_fft,
            weights,
            centers_hz: edges[1..=n_mels].to_vec(),
        }
    }
}

/// Log-Mel filterbank features of `w`.
pub fn log_mel(w: &Waveform, n_mels: usize) -> Result<Spectrogram> {
    let frames = frame_and_window(w, WIN_MS, HOP_MS)?;
    let (n_frames, win) = (frames.shape()[0], frames.shape()[1]);
    let n_fft = win.next_power_of_two();
    let n_bins = n_fft / 2 + 1;
    let bank = MelFilterbank::new(n_mels, n_fft, w.sample_rate);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);

    let mut out = vec![0f32; n_frames * n_mels];
    par::for_each_row(&mut out, n_mels, |f, row| {
        let mut buf: Vec<Complex<f64>> = frames.data()[f * win..(f + 1) * win]
            .iter()
            .map(|&v| Complex::new(v as f64, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(n_fft)
            .collect();
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..n_bins].iter().map(|c| c.norm_sqr()).collect();
        for (m, o) in row.iter_mut().enumerate() {
            let filt = &bank.weights[m * n_bins..(m + 1) * n_bins];
            let e: f64 = filt.iter().zip(&power).map(|(a, b)| a * b).sum();
            *o = e.max(LOG_FLOOR).ln() as f32;
        }
    });
    Spectrogram::new(Tensor::new([n_frames, n_mels], out)?)
}

/// Zero-pads at the end or truncates to exactly `target_frames` rows.
pub fn pad_or_trim(s: &Spectrogram, target_frames: usize) -> Result<Spectrogram> {
    if target_frames == 0 {
        return Err(Error::Input("target frame count must be positive".into()));
    }
    let bins = s.n_mels();
    let mut data = s.values.data().to_vec();
    data.resize(target_frames * bins, 0.0);
    Ok(Spectrogram {
        values: Tensor::new([target_frames, bins], data)?,
        frame_shift_ms: s.frame_shift_ms,
        normalized: s.normalized,
    })
}

/// Dataset-level feature statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub mean: f64,
    pub std: f64,
}

impl CorpusStats {
    /// Population mean/std over every cell; the std is floored at
    /// [`STD_FLOOR`] so constant corpora normalize to zero.
    pub fn compute<'a>(corpus: impl IntoIterator<Item = &'a Spectrogram>) -> Result<Self> {
        let (mut n, mut sum, mut sq) = (0usize, 0.0f64, 0.0f64);
        for s in corpus {
            for &v in s.values.data() {
                n += 1;
                sum += v as f64;
                sq += (v as f64) * (v as f64);
            }
        }
        if n == 0 {
            return Err(Error::Input("cannot compute statistics of an empty corpus".into()));
        }
        let mean = sum / n as f64;
        let var = (sq / n as f64 - mean * mean).max(0.0);
        Ok(CorpusStats {
            mean,
            std: var.sqrt().max(STD_FLOOR),
        })
    }
}

/// `(v − mean) / (2·std)`, giving corpus mean 0 and std 0.5.
pub fn normalize(s: &Spectrogram, stats: CorpusStats) -> Result<Spectrogram> {
    if stats.std.is_nan() || stats.std <= 0.0 || !stats.std.is_finite() || !stats.mean.is_finite() {
        return Err(Error::Input(format!(
            "normalization needs a positive finite std, got {}",
            stats.std
        )));
    }
    let scale = 1.0 / (2.0 * stats.std);
    Ok(Spectrogram {
        values: s
            .values
            .map(|v| ((v as f64 - stats.mean) * scale) as f32),
        frame_shift_ms: s.frame_shift_ms,
        normalized: true,
    })
}

/// Inverse of [`normalize`].
pub fn denormalize(s: &Spectrogram, stats: CorpusStats) -> Spectrogram {
    Spectrogram {
        values: s
            .values
            .map(|v| (v as f64 * 2.0 * stats.std + stats.mean) as f32),
        frame_shift_ms: s.frame_shift_ms,
        normalized: false,
    }
}

/// Reads a mono 16-bit PCM WAV file.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::data(
            path,
            format!("expected mono audio, found {} channels", spec.channels),
        ));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::data(path, "expected 16-bit PCM samples"));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f32 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| wav_error(path, e))?;
    Waveform::new(samples, spec.sample_rate)
}

/// Writes a mono 16-bit PCM WAV file (samples clipped to [−1, 1]).
pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for &s in &w.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v).map_err(|e| wav_error(path, e))?;
    }
    writer.finalize().map_err(|e| wav_error(path, e))
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::data(path, other.to_string()),
    }
}

/// Unpadded, unnormalized log-Mel features of a 16 kHz WAV file.
pub fn featurize_raw(path: &Path) -> Result<Spectrogram> {
    let w = read_wav(path)?;
    if w.sample_rate != SAMPLE_RATE {
        return Err(Error::data(
            path,
            format!("expected {SAMPLE_RATE} Hz audio, found {} Hz", w.sample_rate),
        ));
    }
    log_mel(&w, N_MELS).map_err(|e| Error::data(path, e.to_string()))
}

/// Reads a WAV file and produces the model-ready spectrogram.
pub fn featurize_file(
    path: &Path,
    target_frames: usize,
    stats: Option<CorpusStats>,
) -> Result<Spectrogram> {
    let s = pad_or_trim(&featurize_raw(path)?, target_frames)?;
    match stats {
        Some(st) => normalize(&s, st),
        None => Ok(s),
    }
}
