//! Vision-transformer checkpoint surgery.
//!
//! A square-grid ViT/DeiT checkpoint becomes AST initialization by averaging
//! the three input channels of the patch kernel, cutting the positional grid
//! along frequency and interpolating it along time, reusing the `[CLS]`
//! positional row, merging the special tokens and attaching a fresh head.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AstConfig, AstParams, Block};
use crate::tensor::{trunc_normal, Real, Tensor, TRUNC_NORMAL_STD};

/// Resampling kernel for positional grids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interp {
    Bilinear,
    Nearest,
}

/// How the positional table is initialized during adaptation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosMode {
    Reinit,
    Nearest,
    Bilinear,
}

impl PosMode {
    pub const ALL: [PosMode; 3] = [PosMode::Reinit, PosMode::Nearest, PosMode::Bilinear];

    pub fn interp(self) -> Option<Interp> {
        match self {
            PosMode::Reinit => None,
            PosMode::Nearest => Some(Interp::Nearest),
            PosMode::Bilinear => Some(Interp::Bilinear),
        }
    }
}

impl fmt::Display for PosMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PosMode::Reinit => "reinit",
            PosMode::Nearest => "nearest",
            PosMode::Bilinear => "bilinear",
        })
    }
}

impl FromStr for PosMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reinit" => Ok(PosMode::Reinit),
            "nearest" => Ok(PosMode::Nearest),
            "bilinear" => Ok(PosMode::Bilinear),
            other => Err(Error::Config(format!(
                "unknown positional mode {other:?} (expected reinit, nearest or bilinear)"
            ))),
        }
    }
}

/// A square-grid vision transformer.
#[derive(Clone, Debug, PartialEq)]
pub struct VitCheckpoint {
    /// `[E × 3 × p × p]` patch convolution kernel.
    pub patch_kernel: Tensor,
    pub patch_bias: Tensor,
    /// `[(g² + n_special) × E]`, special-token rows first.
    pub pos_embed: Tensor,
    pub cls: Tensor,
    /// Distillation token of DeiT-style checkpoints.
    pub dist: Option<Tensor>,
    pub blocks: Vec<Block<Tensor>>,
    pub final_ln_g: Tensor,
    pub final_ln_b: Tensor,
    pub head: Option<(Tensor, Tensor)>,
    pub heads: usize,
}

impl VitCheckpoint {
    pub fn embed_dim(&self) -> usize {
        self.patch_kernel.shape()[0]
    }

    pub fn patch_size(&self) -> usize {
        self.patch_kernel.shape()[2]
    }

    pub fn n_special(&self) -> usize {
        1 + usize::from(self.dist.is_some())
    }

    /// Side length `g` of the positional grid.
    pub fn grid_side(&self) -> Result<usize> {
        let rows = self.pos_embed.dims2().0;
        let cells = rows.saturating_sub(self.n_special());
        let g = (cells as f64).sqrt().round() as usize;
        if g == 0 || g * g != cells {
            return Err(Error::Adaptation(format!(
                "pos_embed has {rows} rows, not g² + {} for an integer g",
                self.n_special()
            )));
        }
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.patch_kernel.shape();
        if k.len() != 4 || k[1] != 3 || k[2] != k[3] {
            return Err(Error::Adaptation(format!(
                "patch_embed.w must be [E, 3, p, p], got {k:?}"
            )));
        }
        let e = k[0];
        let mut bad = Vec::new();
        let mut want = |name: &str, t: &Tensor, shape: &[usize]| {
            if t.shape() != shape {
                bad.push(format!("{name} {:?} (want {shape:?})", t.shape()));
            }
        };
        want("patch_embed.b", &self.patch_bias, &[e]);
        want("cls", &self.cls, &[e]);
        if let Some(d) = &self.dist {
            want("dist", d, &[e]);
        }
        want("final_ln.g", &self.final_ln_g, &[e]);
        want("final_ln.b", &self.final_ln_b, &[e]);
        if self.pos_embed.rank() != 2 || self.pos_embed.shape()[1] != e {
            bad.push(format!("pos_embed {:?} (want [rows, {e}])", self.pos_embed.shape()));
        }
        if !bad.is_empty() {
            return Err(Error::Adaptation(format!("shape mismatch: {}", bad.join(", "))));
        }
        if self.heads == 0 || !e.is_multiple_of(self.heads) {
            return Err(Error::Adaptation(format!(
                "{} heads do not divide width {e}",
                self.heads
            )));
        }
        self.grid_side()?;
        Ok(())
    }

    /// Random stand-in for a pretrained checkpoint. The positional grid is a
    /// smooth function of position so interpolation has structure to keep.
    pub fn synthetic<R: Rng + ?Sized>(spec: &VitSpec, rng: &mut R) -> Self {
        let e = spec.embed_dim;
        let g = spec.grid_side;
        let p = spec.patch_size;
        let std = TRUNC_NORMAL_STD;
        let mut special = Vec::new();
        for _ in 0..spec.n_special {
            special.extend(trunc_normal::<f32, _>([e], std, rng).into_data());
        }
        let phases: Vec<f64> = (0..e).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        let mut grid = Vec::with_capacity(g * g * e);
        for r in 0..g {
            for c in 0..g {
                for (k, ph) in phases.iter().enumerate() {
                    let w = 0.2 + k as f64 / e as f64;
                    let v = 0.05 * ((r as f64 * w + ph).sin() + (c as f64 * w * 0.7 - ph).cos());
                    grid.push(v as f32);
                }
            }
        }
        special.extend(grid);
        let block = |rng: &mut R| {
            let h = e * spec.mlp_ratio;
            Block {
                ln1_g: Tensor::ones([e]),
                ln1_b: Tensor::zeros([e]),
                qkv_w: trunc_normal([3 * e, e], std, rng),
                qkv_b: trunc_normal([3 * e], std, rng),
                proj_w: trunc_normal([e, e], std, rng),
                proj_b: trunc_normal([e], std, rng),
                ln2_g: Tensor::ones([e]),
                ln2_b: Tensor::zeros([e]),
                mlp1_w: trunc_normal([h, e], std, rng),
                mlp1_b: trunc_normal([h], std, rng),
                mlp2_w: trunc_normal([e, h], std, rng),
                mlp2_b: trunc_normal([e], std, rng),
            }
        };
        VitCheckpoint {
            patch_kernel: trunc_normal([e, 3, p, p], std, rng),
            patch_bias: trunc_normal([e], std, rng),
            pos_embed: Tensor::new([g * g + spec.n_special, e], special).expect("pos shape"),
            cls: trunc_normal([e], std, rng),
            dist: (spec.n_special == 2).then(|| trunc_normal([e], std, rng)),
            blocks: (0..spec.depth).map(|_| block(rng)).collect(),
            final_ln_g: Tensor::ones([e]),
            final_ln_b: Tensor::zeros([e]),
            head: Some((trunc_normal([1000, e], std, rng), Tensor::zeros([1000]))),
            heads: spec.heads,
        }
    }
}

/// Architecture of a synthetic vision checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VitSpec {
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub patch_size: usize,
    pub grid_side: usize,
    pub n_special: usize,
}

impl VitSpec {
    /// DeiT-base/384 layout: 24×24 grid, two special tokens.
    pub fn deit_base_384() -> Self {
        VitSpec {
            embed_dim: 768,
            depth: 12,
            heads: 12,
            mlp_ratio: 4,
            patch_size: 16,
            grid_side: 24,
            n_special: 2,
        }
    }

    /// Same layout as `config`'s encoder, for a 24×24 grid.
    pub fn matching(config: &AstConfig, n_special: usize) -> Self {
        VitSpec {
            embed_dim: config.embed_dim,
            depth: config.depth,
            heads: config.heads,
            mlp_ratio: config.mlp_ratio,
            patch_size: config.patch.patch_f,
            grid_side: 24,
            n_special,
        }
    }
}

/// Mean over the channel axis: `[E × 3 × p × p]` → `[E × p²]`.
pub fn average_channels(kernel: &Tensor) -> Result<Tensor> {
    let s = kernel.shape();
    if s.len() != 4 || s[1] != 3 {
        return Err(Error::Adaptation(format!(
            "patch kernel must be [E, 3, p, q], got {s:?}"
        )));
    }
    let (e, area) = (s[0], s[2] * s[3]);
    let src = kernel.data();
    let mut out = vec![0f32; e * area];
    for o in 0..e {
        for k in 0..area {
            let base = o * 3 * area + k;
            let sum = src[base] as f64 + src[base + area] as f64 + src[base + 2 * area] as f64;
            out[o * area + k] = (sum / 3.0) as f32;
        }
    }
    Tensor::new([e, area], out)
}

/// Source coordinates for resampling `src` points onto `dst` points with
/// aligned corners; a single output sits at the source center.
fn sample_coords(src: usize, dst: usize) -> Vec<f64> {
    if dst == 1 {
        return vec![(src as f64 - 1.0) / 2.0];
    }
    (0..dst)
        .map(|i| i as f64 * (src as f64 - 1.0) / (dst as f64 - 1.0))
        .collect()
}

/// Resamples axis 0 of a `[len × inner]` view.
fn resample_axis<T: Real>(src: &[T], len: usize, inner: usize, dst: usize, interp: Interp) -> Vec<T> {
    let mut out = Vec::with_capacity(dst * inner);
    for x in sample_coords(len, dst) {
        match interp {
            Interp::Nearest => {
                let i = (x.round() as usize).min(len - 1);
                out.extend_from_slice(&src[i * inner..(i + 1) * inner]);
            }
            Interp::Bilinear => {
                let i0 = (x.floor() as usize).min(len - 1);
                let i1 = (i0 + 1).min(len - 1);
                let frac = x - i0 as f64;
                for k in 0..inner {
                    let a = src[i0 * inner + k];
                    let b = src[i1 * inner + k];
                    if frac == 0.0 || a == b {
                        out.push(a);
                    } else {
                        let v = T::of(a.f64() + (b.f64() - a.f64()) * frac);
                        out.push(v.max(a.min(b)).min(a.max(b)));
                    }
                }
            }
        }
    }
    out
}

/// Cut-and-interpolate a `[g_f × g_t × E]` positional grid to `[n_f × n_t × E]`.
///
/// The frequency axis keeps the centered slice of length `n_f` (offset
/// `floor((g_f − n_f)/2)`) when `n_f ≤ g_f` and is interpolated otherwise;
/// the time axis is always interpolated.
pub fn adapt_grid<T: Real>(pos: &Tensor<T>, n_f: usize, n_t: usize, interp: Interp) -> Result<Tensor<T>> {
    let s = pos.shape();
    if s.len() != 3 {
        return Err(Error::Adaptation(format!(
            "positional grid must be [g_f, g_t, E], got {s:?}"
        )));
    }
    if n_f == 0 || n_t == 0 {
        return Err(Error::Geometry("target grid extents must be positive".into()));
    }
    let (g_f, g_t, e) = (s[0], s[1], s[2]);
    let freq: Vec<T> = if n_f <= g_f {
        let off = cut_offset(g_f, n_f);
        pos.data()[off * g_t * e..(off + n_f) * g_t * e].to_vec()
    } else {
        resample_axis(pos.data(), g_f, g_t * e, n_f, interp)
    };
    let mut out = Vec::with_capacity(n_f * n_t * e);
    for row in freq.chunks(g_t * e) {
        out.extend(resample_axis(row, g_t, e, n_t, interp));
    }
    Tensor::new([n_f, n_t, e], out)
}

/// Offset of the centered frequency cut.
pub fn cut_offset(g: usize, n: usize) -> usize {
    g.saturating_sub(n) / 2
}

/// Mean of the two special tokens; a lone `[CLS]` passes through.
pub fn merge_cls(cls: &Tensor, second: Option<&Tensor>) -> Result<Tensor> {
    match second {
        None => Ok(cls.clone()),
        Some(b) => {
            if b.shape() != cls.shape() {
                return Err(Error::dim("merge_cls", cls.shape(), b.shape()));
            }
            cls.zip_with(b, "merge_cls", |x, y| ((x as f64 + y as f64) / 2.0) as f32)
        }
    }
}

/// Human-readable record of an adaptation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdaptReport {
    pub mode: PosMode,
    pub source_grid: (usize, usize),
    pub target_grid: (usize, usize),
    pub cut_offset: usize,
    pub n_special: usize,
    pub tensors: Vec<TensorChange>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TensorChange {
    pub name: String,
    pub before: Vec<usize>,
    pub after: Vec<usize>,
    pub action: String,
}

impl fmt::Display for AdaptReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mode: {}", self.mode)?;
        writeln!(
            f,
            "positional grid: {}x{} -> {}x{} (frequency cut offset {})",
            self.source_grid.0, self.source_grid.1, self.target_grid.0, self.target_grid.1, self.cut_offset
        )?;
        writeln!(f, "special tokens in source: {}", self.n_special)?;
        for t in &self.tensors {
            writeln!(f, "{:<16} {:>18} -> {:<18} {}", t.name, fmt_shape(&t.before), fmt_shape(&t.after), t.action)?;
        }
        Ok(())
    }
}

fn fmt_shape(s: &[usize]) -> String {
    if s.is_empty() {
        return "-".into();
    }
    s.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
}

/// Builds AST parameters for `target` from a vision checkpoint.
pub fn adapt_checkpoint<R: Rng + ?Sized>(
    src: &VitCheckpoint,
    target: &AstConfig,
    mode: PosMode,
    rng: &mut R,
) -> Result<(AstParams, AdaptReport)> {
    src.validate()?;
    target.validate()?;
    let e = src.embed_dim();
    let mut bad = Vec::new();
    if e != target.embed_dim {
        bad.push(format!("patch_embed.w width {e} vs embed_dim {}", target.embed_dim));
    }
    if src.blocks.len() != target.depth {
        bad.push(format!("blocks: {} vs depth {}", src.blocks.len(), target.depth));
    }
    if src.heads != target.heads {
        bad.push(format!("heads: {} vs {}", src.heads, target.heads));
    }
    let p = src.patch_size();
    if p != target.patch.patch_f || p != target.patch.patch_t {
        bad.push(format!(
            "patch_embed.w kernel {p}x{p} vs patch {}x{}",
            target.patch.patch_f, target.patch.patch_t
        ));
    }
    if bad.is_empty() {
        let shapes = crate::model::ParamSet::expected_shapes(target)?;
        for (i, b) in src.blocks.iter().enumerate() {
            for ((name, t), want) in crate::model::BLOCK_SLOTS
                .iter()
                .zip(b.slots())
                .zip(shapes.blocks[i].slots())
            {
                if t.shape() != want.as_slice() {
                    bad.push(format!("blocks.{i}.{name} {:?} vs {want:?}", t.shape()));
                }
            }
        }
    }
    if !bad.is_empty() {
        return Err(Error::Adaptation(format!(
            "source does not match target: {}",
            bad.join("; ")
        )));
    }

    let g = src.grid_side()?;
    let grid = target.grid()?;
    let ns = src.n_special();
    let mut changes = Vec::new();
    let mut note = |name: &str, before: &[usize], after: &[usize], action: &str| {
        changes.push(TensorChange {
            name: name.into(),
            before: before.to_vec(),
            after: after.to_vec(),
            action: action.into(),
        })
    };

    let patch_proj_w = average_channels(&src.patch_kernel)?;
    note("patch_proj.w", src.patch_kernel.shape(), patch_proj_w.shape(), "channel mean");
    note("patch_proj.b", src.patch_bias.shape(), src.patch_bias.shape(), "copied");

    let cls_pos = src.pos_embed.row(0).to_vec();
    let body: Vec<f32> = match mode.interp() {
        Some(interp) => {
            let table = Tensor::new([g, g, e], src.pos_embed.data()[ns * e..].to_vec())?;
            adapt_grid(&table, grid.n_f, grid.n_t, interp)?.into_data()
        }
        None => trunc_normal::<f32, _>([grid.num_patches(), e], TRUNC_NORMAL_STD, rng).into_data(),
    };
    let mut pos = cls_pos;
    pos.extend(body);
    let pos_embed = Tensor::new([grid.num_patches() + 1, e], pos)?;
    let pos_action = match mode {
        PosMode::Reinit => "row 0 reused, grid reinitialized".to_string(),
        m => format!("row 0 reused, grid cut + {m}"),
    };
    note("pos_embed", src.pos_embed.shape(), pos_embed.shape(), &pos_action);

    let cls = merge_cls(&src.cls, src.dist.as_ref())?;
    note(
        "cls",
        src.cls.shape(),
        cls.shape(),
        if ns == 2 { "mean of cls and dist" } else { "copied" },
    );
    note("blocks.*", &[src.blocks.len()], &[src.blocks.len()], "copied verbatim");
    note("final_ln", &[e], &[e], "copied");

    let head_w = trunc_normal([target.num_classes, e], TRUNC_NORMAL_STD, rng);
    note(
        "head.w",
        src.head.as_ref().map(|h| h.0.shape()).unwrap_or(&[]),
        head_w.shape(),
        "discarded, reinitialized",
    );

    let params = AstParams {
        patch_proj_w,
        patch_proj_b: src.patch_bias.clone(),
        pos_embed,
        cls,
        blocks: src.blocks.clone(),
        final_ln_g: src.final_ln_g.clone(),
        final_ln_b: src.final_ln_b.clone(),
        head_w,
        head_b: Tensor::zeros([target.num_classes]),
    };
    params.validate(target)?;
    let report = AdaptReport {
        mode,
        source_grid: (g, g),
        target_grid: (grid.n_f, grid.n_t),
        cut_offset: cut_offset(g, grid.n_f),
        n_special: ns,
        tensors: changes,
    };
    Ok((params, report))
}
