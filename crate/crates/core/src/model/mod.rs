//! The Audio Spectrogram Transformer network.

mod forward;
mod params;

use serde::{Deserialize, Serialize};

use crate::dsp::N_MELS;
use crate::error::{Error, Result};
use crate::patchify::{PatchGrid, PatchSpec};

pub use forward::{
    embed, encoder_block, forward, forward_patches, forward_tape, loss_on_tape, register,
    resize_positional, ForwardPass,
};
pub use params::{AstParams, Block, ParamSet, BLOCK_SLOTS};

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AstConfig {
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub patch: PatchSpec,
    pub n_mels: usize,
    pub target_frames: usize,
    pub num_classes: usize,
    pub multi_label: bool,
    /// Reserved; the encoder runs without dropout.
    #[serde(default)]
    pub dropout: f64,
}

impl AstConfig {
    /// 768-wide, 12 layers, 12 heads, 16×16 patches with overlap 6, 10 s input.
    pub fn base(num_classes: usize) -> Self {
        AstConfig {
            embed_dim: 768,
            depth: 12,
            heads: 12,
            mlp_ratio: 4,
            patch: PatchSpec {
                patch_f: 16,
                patch_t: 16,
                stride_f: 10,
                stride_t: 10,
            },
            n_mels: N_MELS,
            target_frames: 1024,
            num_classes,
            multi_label: true,
            dropout: 0.0,
        }
    }

    /// Desk-scale encoder used for quick experiments and tests.
    pub fn tiny(num_classes: usize) -> Self {
        AstConfig {
            embed_dim: 16,
            depth: 1,
            heads: 2,
            mlp_ratio: 2,
            target_frames: 128,
            patch: PatchSpec {
                patch_f: 16,
                patch_t: 16,
                stride_f: 16,
                stride_t: 16,
            },
            ..Self::base(num_classes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.heads == 0 || !self.embed_dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "embed_dim {} must be a positive multiple of heads {}",
                self.embed_dim, self.heads
            )));
        }
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be at least 1".into()));
        }
        if self.mlp_ratio == 0 {
            return Err(Error::Config("mlp_ratio must be at least 1".into()));
        }
        self.grid()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<PatchGrid> {
        self.patch.grid(self.n_mels, self.target_frames)
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn mlp_hidden(&self) -> usize {
        self.embed_dim * self.mlp_ratio
    }

    /// Same architecture at a different input length.
    pub fn with_frames(&self, target_frames: usize) -> Self {
        AstConfig {
            target_frames,
            ..self.clone()
        }
    }
}
