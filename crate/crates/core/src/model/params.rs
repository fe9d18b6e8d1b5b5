use std::collections::BTreeMap;

use rand::Rng;

use super::AstConfig;
use crate::error::{Error, Result};
use crate::tensor::{trunc_normal, Real, Tensor, TRUNC_NORMAL_STD};

/// Canonical per-block tensor names, in storage order.
pub const BLOCK_SLOTS: [&str; 12] = [
    "ln1.g", "ln1.b", "qkv.w", "qkv.b", "proj.w", "proj.b", "ln2.g", "ln2.b", "mlp1.w",
    "mlp1.b", "mlp2.w", "mlp2.b",
];

/// One pre-norm encoder block. `qkv` is a fused `[3d × d]` projection laid out
/// query, key, value; weights are stored `[out × in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Block<W> {
    pub ln1_g: W,
    pub ln1_b: W,
    pub qkv_w: W,
    pub qkv_b: W,
    pub proj_w: W,
    pub proj_b: W,
    pub ln2_g: W,
    pub ln2_b: W,
    pub mlp1_w: W,
    pub mlp1_b: W,
    pub mlp2_w: W,
    pub mlp2_b: W,
}

impl<W> Block<W> {
    pub fn slots(&self) -> [&W; 12] {
        [
            &self.ln1_g,
            &self.ln1_b,
            &self.qkv_w,
            &self.qkv_b,
            &self.proj_w,
            &self.proj_b,
            &self.ln2_g,
            &self.ln2_b,
            &self.mlp1_w,
            &self.mlp1_b,
            &self.mlp2_w,
            &self.mlp2_b,
        ]
    }

    pub fn slots_mut(&mut self) -> [&mut W; 12] {
        [
            &mut self.ln1_g,
            &mut self.ln1_b,
            &mut self.qkv_w,
            &mut self.qkv_b,
            &mut self.proj_w,
            &mut self.proj_b,
            &mut self.ln2_g,
            &mut self.ln2_b,
            &mut self.mlp1_w,
            &mut self.mlp1_b,
            &mut self.mlp2_w,
            &mut self.mlp2_b,
        ]
    }

    /// Builds a block by asking `get` for each slot name in order.
    pub fn try_from_slots(mut get: impl FnMut(&'static str) -> Result<W>) -> Result<Self> {
        Ok(Block {
            ln1_g: get(BLOCK_SLOTS[0])?,
            ln1_b: get(BLOCK_SLOTS[1])?,
            qkv_w: get(BLOCK_SLOTS[2])?,
            qkv_b: get(BLOCK_SLOTS[3])?,
            proj_w: get(BLOCK_SLOTS[4])?,
            proj_b: get(BLOCK_SLOTS[5])?,
            ln2_g: get(BLOCK_SLOTS[6])?,
            ln2_b: get(BLOCK_SLOTS[7])?,
            mlp1_w: get(BLOCK_SLOTS[8])?,
            mlp1_b: get(BLOCK_SLOTS[9])?,
            mlp2_w: get(BLOCK_SLOTS[10])?,
            mlp2_b: get(BLOCK_SLOTS[11])?,
        })
    }

    pub fn map<U>(&self, mut f: impl FnMut(&W) -> U) -> Block<U> {
        let s = self.slots();
        let mut i = 0;
        Block::try_from_slots(|_| {
            i += 1;
            Ok(f(s[i - 1]))
        })
        .expect("infallible")
    }
}

/// Complete named parameter set, generic over what sits in each slot
/// (tensors, tape handles, shapes).
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<W> {
    pub patch_proj_w: W,
    pub patch_proj_b: W,
    pub pos_embed: W,
    pub cls: W,
    pub blocks: Vec<Block<W>>,
    pub final_ln_g: W,
    pub final_ln_b: W,
    pub head_w: W,
    pub head_b: W,
}

pub type AstParams<T = f32> = ParamSet<Tensor<T>>;

impl<W> ParamSet<W> {
    /// `(canonical name, slot)` pairs in storage order.
    pub fn named(&self) -> Vec<(String, &W)> {
        let mut out = vec![
            ("patch_proj.w".to_string(), &self.patch_proj_w),
            ("patch_proj.b".to_string(), &self.patch_proj_b),
            ("pos_embed".to_string(), &self.pos_embed),
            ("cls".to_string(), &self.cls),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            for (name, w) in BLOCK_SLOTS.iter().zip(b.slots()) {
                out.push((format!("blocks.{i}.{name}"), w));
            }
        }
        out.push(("final_ln.g".into(), &self.final_ln_g));
        out.push(("final_ln.b".into(), &self.final_ln_b));
        out.push(("head.w".into(), &self.head_w));
        out.push(("head.b".into(), &self.head_b));
        out
    }

    pub fn slots(&self) -> Vec<&W> {
        self.named().into_iter().map(|(_, w)| w).collect()
    }

    pub fn slots_mut(&mut self) -> Vec<&mut W> {
        let mut out = vec![
            &mut self.patch_proj_w,
            &mut self.patch_proj_b,
            &mut self.pos_embed,
            &mut self.cls,
        ];
        for b in &mut self.blocks {
            out.extend(b.slots_mut());
        }
        out.extend([
            &mut self.final_ln_g,
            &mut self.final_ln_b,
            &mut self.head_w,
            &mut self.head_b,
        ]);
        out
    }

    /// Builds a set of `depth` blocks by asking `get` for every canonical name.
    pub fn try_from_names(
        depth: usize,
        mut get: impl FnMut(&str) -> Result<W>,
    ) -> Result<Self> {
        let patch_proj_w = get("patch_proj.w")?;
        let patch_proj_b = get("patch_proj.b")?;
        let pos_embed = get("pos_embed")?;
        let cls = get("cls")?;
        let blocks = (0..depth)
            .map(|i| Block::try_from_slots(|slot| get(&format!("blocks.{i}.{slot}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(ParamSet {
            patch_proj_w,
            patch_proj_b,
            pos_embed,
            cls,
            blocks,
            final_ln_g: get("final_ln.g")?,
            final_ln_b: get("final_ln.b")?,
            head_w: get("head.w")?,
            head_b: get("head.b")?,
        })
    }

    pub fn map<U>(&self, mut f: impl FnMut(&W) -> U) -> ParamSet<U> {
        let mut slots = self.slots().into_iter();
        ParamSet::try_from_names(self.blocks.len(), |_| Ok(f(slots.next().expect("slot"))))
            .expect("infallible")
    }

    /// Pairs every slot of `self` with the matching slot of `other`.
    pub fn zip_map<V, U>(
        &self,
        other: &ParamSet<V>,
        mut f: impl FnMut(&str, &W, &V) -> Result<U>,
    ) -> Result<ParamSet<U>> {
        if self.blocks.len() != other.blocks.len() {
            return Err(Error::Aggregation(format!(
                "depth mismatch: {} vs {} blocks",
                self.blocks.len(),
                other.blocks.len()
            )));
        }
        let a = self.named();
        let b = other.slots();
        let mut it = a.into_iter().zip(b);
        ParamSet::try_from_names(self.blocks.len(), |_| {
            let ((name, x), y) = it.next().expect("slot");
            f(&name, x, y)
        })
    }
}

impl ParamSet<Vec<usize>> {
    /// Shapes every tensor must have under `config`.
    pub fn expected_shapes(config: &AstConfig) -> Result<Self> {
        config.validate()?;
        let d = config.embed_dim;
        let h = config.mlp_hidden();
        let n = config.grid()?.num_patches();
        let block = Block {
            ln1_g: vec![d],
            ln1_b: vec![d],
            qkv_w: vec![3 * d, d],
            qkv_b: vec![3 * d],
            proj_w: vec![d, d],
            proj_b: vec![d],
            ln2_g: vec![d],
            ln2_b: vec![d],
            mlp1_w: vec![h, d],
            mlp1_b: vec![h],
            mlp2_w: vec![d, h],
            mlp2_b: vec![d],
        };
        Ok(ParamSet {
            patch_proj_w: vec![d, config.patch.patch_len()],
            patch_proj_b: vec![d],
            pos_embed: vec![n + 1, d],
            cls: vec![d],
            blocks: vec![block; config.depth],
            final_ln_g: vec![d],
            final_ln_b: vec![d],
            head_w: vec![config.num_classes, d],
            head_b: vec![config.num_classes],
        })
    }
}

impl<T: Real> AstParams<T> {
    /// Fresh parameters: truncated-normal weights, zero biases, unit LN gains.
    pub fn init<R: Rng + ?Sized>(config: &AstConfig, rng: &mut R) -> Result<Self> {
        let shapes = ParamSet::expected_shapes(config)?;
        let named = shapes.named();
        let mut it = named.into_iter();
        ParamSet::try_from_names(config.depth, |_| {
            let (name, shape) = it.next().expect("slot");
            Ok(init_tensor(&name, shape.clone(), rng))
        })
    }

    /// Checks every shape against `config` and that all values are finite.
    pub fn validate(&self, config: &AstConfig) -> Result<()> {
        let shapes = ParamSet::expected_shapes(config)?;
        if shapes.blocks.len() != self.blocks.len() {
            return Err(Error::Config(format!(
                "expected {} encoder blocks, found {}",
                shapes.blocks.len(),
                self.blocks.len()
            )));
        }
        let mut bad = Vec::new();
        for ((name, t), want) in self.named().into_iter().zip(shapes.slots()) {
            if t.shape() != want.as_slice() {
                bad.push(format!("{name} {:?} (want {want:?})", t.shape()));
            } else if !t.is_finite() {
                bad.push(format!("{name} has non-finite values"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("parameter mismatch: {}", bad.join(", "))))
        }
    }

    pub fn cast<U: Real>(&self) -> AstParams<U> {
        self.map(|t| t.cast())
    }

    pub fn to_map(&self) -> BTreeMap<String, Tensor<T>> {
        self.named()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect()
    }

    pub fn num_values(&self) -> usize {
        self.slots().iter().map(|t| t.numel()).sum()
    }

    /// Fresh classification head for `num_classes` outputs.
    pub fn reset_head<R: Rng + ?Sized>(&mut self, num_classes: usize, rng: &mut R) {
        let d = self.cls.numel();
        self.head_w = trunc_normal([num_classes, d], TRUNC_NORMAL_STD, rng);
        self.head_b = Tensor::zeros([num_classes]);
    }
}

pub(crate) fn init_tensor<T: Real, R: Rng + ?Sized>(
    name: &str,
    shape: Vec<usize>,
    rng: &mut R,
) -> Tensor<T> {
    if name.ends_with(".g") {
        Tensor::ones(shape)
    } else if name.ends_with(".b") {
        Tensor::zeros(shape)
    } else {
        trunc_normal(shape, TRUNC_NORMAL_STD, rng)
    }
}
