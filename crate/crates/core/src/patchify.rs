//! Spectrogram patch geometry and extraction.
//!
//! Patches are enumerated frequency-major (index `f·n_t + t`) so the
//! positional table reads as an `n_f × n_t` grid whose first axis is
//! frequency. Each patch is flattened with frequency rows and time columns.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsp::Spectrogram;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Patch extent and stride along frequency and time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchSpec {
    pub patch_f: usize,
    pub patch_t: usize,
    pub stride_f: usize,
    pub stride_t: usize,
}

impl PatchSpec {
    /// Square `size × size` patches with the same overlap on both axes.
    pub fn square(size: usize, overlap: usize) -> Result<Self> {
        if overlap >= size {
            return Err(Error::Geometry(format!(
                "overlap {overlap} must be smaller than the patch size {size}"
            )));
        }
        Self::new(size, size, size - overlap, size - overlap)
    }

    pub fn new(patch_f: usize, patch_t: usize, stride_f: usize, stride_t: usize) -> Result<Self> {
        let spec = PatchSpec {
            patch_f,
            patch_t,
            stride_f,
            stride_t,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Non-overlapping patches of the given shape.
    pub fn tiled(patch_f: usize, patch_t: usize) -> Result<Self> {
        Self::new(patch_f, patch_t, patch_f, patch_t)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |p: usize, s: usize| p >= 1 && s >= 1 && s <= p;
        if !ok(self.patch_f, self.stride_f) || !ok(self.patch_t, self.stride_t) {
            return Err(Error::Geometry(format!(
                "need 1 <= stride <= patch on both axes, got {self}"
            )));
        }
        Ok(())
    }

    pub fn patch_len(&self) -> usize {
        self.patch_f * self.patch_t
    }

    pub fn overlap_f(&self) -> usize {
        self.patch_f - self.stride_f
    }

    pub fn overlap_t(&self) -> usize {
        self.patch_t - self.stride_t
    }

    /// Binds the geometry to input extents.
    pub fn grid(&self, d_f: usize, d_t: usize) -> Result<PatchGrid> {
        let (n_f, n_t) = patch_counts(d_f, d_t, self)?;
        Ok(PatchGrid {
            spec: *self,
            n_f,
            n_t,
        })
    }
}

impl fmt::Display for PatchSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{} stride {}x{}",
            self.patch_f, self.patch_t, self.stride_f, self.stride_t
        )
    }
}

/// Parses `FxT` (e.g. `16x16`, `128x2`) as a patch shape without overlap.
impl FromStr for PatchSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (f, t) = s
            .split_once(['x', 'X', '×'])
            .ok_or_else(|| Error::Config(format!("patch shape must look like FxT, got {s:?}")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad patch extent {v:?}")))
        };
        PatchSpec::tiled(parse(f)?, parse(t)?)
    }
}

/// Patch geometry bound to a spectrogram of known extents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchGrid {
    pub spec: PatchSpec,
    pub n_f: usize,
    pub n_t: usize,
}

impl PatchGrid {
    /// Sequence length N.
    pub fn num_patches(&self) -> usize {
        self.n_f * self.n_t
    }
}

/// `(floor((D_f − P_f)/S_f) + 1, floor((D_t − P_t)/S_t) + 1)`; cells past the
/// last full stride are dropped.
pub fn patch_counts(d_f: usize, d_t: usize, spec: &PatchSpec) -> Result<(usize, usize)> {
    spec.validate()?;
    if d_f < spec.patch_f || d_t < spec.patch_t {
        return Err(Error::Geometry(format!(
            "patch {}x{} does not fit a {d_f}x{d_t} input",
            spec.patch_f, spec.patch_t
        )));
    }
    Ok((
        (d_f - spec.patch_f) / spec.stride_f + 1,
        (d_t - spec.patch_t) / spec.stride_t + 1,
    ))
}

/// Flattened patches, `N × (patch_f·patch_t)`.
pub fn extract_patches(s: &Spectrogram, spec: &PatchSpec) -> Result<Tensor<f32>> {
    let grid = spec.grid(s.n_mels(), s.frames())?;
    let len = spec.patch_len();
    let bins = s.n_mels();
    let src = s.values.data();
    let mut out = vec![0f32; grid.num_patches() * len];
    crate::par::for_each_row(&mut out, len, |i, row| {
        let (fi, ti) = (i / grid.n_t, i % grid.n_t);
        let (f0, t0) = (fi * spec.stride_f, ti * spec.stride_t);
        for df in 0..spec.patch_f {
            for dt in 0..spec.patch_t {
                row[df * spec.patch_t + dt] = src[(t0 + dt) * bins + f0 + df];
            }
        }
    });
    Tensor::new([grid.num_patches(), len], out)
}
