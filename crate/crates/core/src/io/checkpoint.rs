//! Model, vision-checkpoint and feature-cache files on top of [`Container`].

use std::path::Path;

use crate::adapt::VitCheckpoint;
use crate::dsp::{CorpusStats, Spectrogram};
use crate::error::{Error, Result};
use crate::io::container::Container;
use crate::io::manifest::ManifestRow;
use crate::model::{AstConfig, AstParams, Block, BLOCK_SLOTS};
use crate::tensor::Tensor;

pub const KIND_AST: &str = "ast";
pub const KIND_VIT: &str = "vit";
pub const KIND_FEATURES: &str = "features";

fn json<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::Format(format!("encoding metadata: {e}")))
}

fn parse<T: serde::de::DeserializeOwned>(key: &str, s: &str) -> Result<T> {
    serde_json::from_str(s).map_err(|e| Error::Format(format!("metadata {key:?}: {e}")))
}

fn expect_kind(c: &Container, kind: &str) -> Result<()> {
    let got = c.require_meta("kind")?;
    if got != kind {
        return Err(Error::Format(format!("expected a {kind:?} container, found {got:?}")));
    }
    Ok(())
}

/// AST weights together with the architecture and input statistics they
/// were trained under.
#[derive(Clone, Debug, PartialEq)]
pub struct AstCheckpoint {
    pub config: AstConfig,
    pub params: AstParams,
    pub stats: Option<CorpusStats>,
    /// Free-form provenance such as the epoch number.
    pub notes: Vec<(String, String)>,
}

impl AstCheckpoint {
    pub fn new(config: AstConfig, params: AstParams, stats: Option<CorpusStats>) -> Self {
        AstCheckpoint {
            config,
            params,
            stats,
            notes: Vec::new(),
        }
    }

    pub fn note(mut self, key: &str, value: impl ToString) -> Self {
        self.notes.push((key.into(), value.to_string()));
        self
    }

    pub fn to_container(&self) -> Result<Container> {
        self.params.validate(&self.config)?;
        let mut c = Container::new()
            .with_meta("kind", KIND_AST)
            .with_meta("config", json(&self.config)?);
        if let Some(s) = self.stats {
            c = c.with_meta("norm", json(&s)?);
        }
        for (k, v) in &self.notes {
            c = c.with_meta(&format!("note.{k}"), v.clone());
        }
        for (name, t) in self.params.named() {
            c.push(name, t.clone())?;
        }
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        expect_kind(c, KIND_AST)?;
        let config: AstConfig = parse("config", c.require_meta("config")?)?;
        let stats = c.meta("norm").map(|s| parse("norm", s)).transpose()?;
        let params = AstParams::try_from_names(config.depth, |n| c.require(n).cloned())?;
        params.validate(&config).map_err(|e| Error::Format(e.to_string()))?;
        let expected = params.named().len();
        if c.len() != expected {
            return Err(Error::Format(format!(
                "{} tensors stored, architecture has {expected}",
                c.len()
            )));
        }
        let notes = c
            .metadata
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("note.").map(|k| (k.to_string(), v.clone())))
            .collect();
        Ok(AstCheckpoint {
            config,
            params,
            stats,
            notes,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?).map_err(|e| match e {
            Error::Format(m) => Error::data(path, m),
            other => other,
        })
    }
}

pub fn vit_to_container(v: &VitCheckpoint) -> Result<Container> {
    v.validate()?;
    let mut c = Container::new()
        .with_meta("kind", KIND_VIT)
        .with_meta("heads", v.heads.to_string());
    c.push("patch_embed.w", v.patch_kernel.clone())?;
    c.push("patch_embed.b", v.patch_bias.clone())?;
    c.push("pos_embed", v.pos_embed.clone())?;
    c.push("cls", v.cls.clone())?;
    if let Some(d) = &v.dist {
        c.push("dist", d.clone())?;
    }
    for (i, b) in v.blocks.iter().enumerate() {
        for (slot, t) in BLOCK_SLOTS.iter().zip(b.slots()) {
            c.push(format!("blocks.{i}.{slot}"), t.clone())?;
        }
    }
    c.push("norm.g", v.final_ln_g.clone())?;
    c.push("norm.b", v.final_ln_b.clone())?;
    if let Some((w, b)) = &v.head {
        c.push("head.w", w.clone())?;
        c.push("head.b", b.clone())?;
    }
    Ok(c)
}

pub fn vit_from_container(c: &Container) -> Result<VitCheckpoint> {
    expect_kind(c, KIND_VIT)?;
    let heads: usize = c
        .require_meta("heads")?
        .parse()
        .map_err(|_| Error::Format("metadata \"heads\" is not an integer".into()))?;
    let mut depth = 0;
    while c.get(&format!("blocks.{depth}.ln1.g")).is_some() {
        depth += 1;
    }
    let blocks = (0..depth)
        .map(|i| Block::try_from_slots(|slot| c.require(&format!("blocks.{i}.{slot}")).cloned()))
        .collect::<Result<Vec<_>>>()?;
    let head = match (c.get("head.w"), c.get("head.b")) {
        (Some(w), Some(b)) => Some((w.clone(), b.clone())),
        _ => None,
    };
    let v = VitCheckpoint {
        patch_kernel: c.require("patch_embed.w")?.clone(),
        patch_bias: c.require("patch_embed.b")?.clone(),
        pos_embed: c.require("pos_embed")?.clone(),
        cls: c.require("cls")?.clone(),
        dist: c.get("dist").cloned(),
        blocks,
        final_ln_g: c.require("norm.g")?.clone(),
        final_ln_b: c.require("norm.b")?.clone(),
        head,
        heads,
    };
    v.validate()?;
    Ok(v)
}

/// Raw (unpadded, unnormalized) spectrograms for every manifest row.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureCache {
    pub rows: Vec<ManifestRow>,
    pub specs: Vec<Spectrogram>,
}

impl FeatureCache {
    pub fn to_container(&self) -> Result<Container> {
        if self.rows.len() != self.specs.len() {
            return Err(Error::Input(format!(
                "{} manifest rows but {} spectrograms",
                self.rows.len(),
                self.specs.len()
            )));
        }
        let mut c = Container::new()
            .with_meta("kind", KIND_FEATURES)
            .with_meta("rows", json(&self.rows)?);
        for (i, s) in self.specs.iter().enumerate() {
            c.push(format!("spec.{i}"), s.values.clone())?;
        }
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        expect_kind(c, KIND_FEATURES)?;
        let rows: Vec<ManifestRow> = parse("rows", c.require_meta("rows")?)?;
        let specs = (0..rows.len())
            .map(|i| {
                let t: &Tensor = c.require(&format!("spec.{i}"))?;
                Spectrogram::new(t.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureCache { rows, specs })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}
