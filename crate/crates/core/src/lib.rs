//! Audio Spectrogram Transformer toolkit.
//!
//! A convolution-free audio classifier: log-Mel filterbank features are cut
//! into overlapping 16×16 patches, linearly embedded, prefixed with a `[CLS]`
//! token and run through a pre-norm transformer encoder whose `[CLS]` output
//! feeds a linear head. Vision-transformer checkpoints can be adapted as
//! initialization, and the training pipeline covers balanced sampling, mixup,
//! spectrogram masking, Adam, weight averaging and output ensembling.

pub mod adapt;
pub mod dsp;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod par;
pub mod patchify;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor};
