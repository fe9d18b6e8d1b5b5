//! Run configuration: a preset plus JSON overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::adapt::PosMode;
use crate::dsp::CorpusStats;
use crate::error::{Error, Result};
use crate::model::AstConfig;
use crate::patchify::PatchSpec;
use crate::train::{Averaging, LossKind, Schedule, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Desk-scale encoder on 1.28 s inputs, trained from scratch.
    Tiny,
    AudiosetBalanced,
    AudiosetFull,
    Esc,
    Speechcommands,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Tiny,
        Preset::AudiosetBalanced,
        Preset::AudiosetFull,
        Preset::Esc,
        Preset::Speechcommands,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Tiny => "tiny",
            Preset::AudiosetBalanced => "audioset-balanced",
            Preset::AudiosetFull => "audioset-full",
            Preset::Esc => "esc",
            Preset::Speechcommands => "speechcommands",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Preset::ALL.iter().map(|p| p.name()).collect();
                Error::Config(format!("unknown preset {s:?} (expected one of {})", names.join(", ")))
            })
    }
}

/// Where the input data lives.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DataPaths {
    pub manifest: Option<PathBuf>,
    /// Feature cache written by `featurize`; used instead of the manifest.
    pub features: Option<PathBuf>,
    /// Defaults to `labels.json` next to the manifest or cache.
    pub labels: Option<PathBuf>,
    pub train_split: String,
    pub eval_split: String,
}

impl DataPaths {
    pub fn label_path(&self) -> Result<PathBuf> {
        if let Some(p) = &self.labels {
            return Ok(p.clone());
        }
        let anchor = self
            .features
            .as_ref()
            .or(self.manifest.as_ref())
            .ok_or_else(|| Error::Config("no manifest or feature cache configured".into()))?;
        Ok(anchor.parent().unwrap_or(Path::new(".")).join("labels.json"))
    }
}

/// Starting weights of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitSource {
    Scratch,
    /// Adapt a vision checkpoint; `path: null` uses a seeded synthetic one.
    Vit { path: Option<PathBuf>, mode: PosMode },
    /// Continue from an AST checkpoint.
    Checkpoint { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub preset: Preset,
    pub model: AstConfig,
    pub train: TrainConfig,
    /// Overrides statistics computed from the training split.
    pub norm: Option<CorpusStats>,
    pub data: DataPaths,
    pub init: InitSource,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl RunConfig {
    pub fn preset(p: Preset) -> Self {
        let (model, train, init) = match p {
            Preset::Tiny => (
                AstConfig::tiny(4),
                TrainConfig {
                    batch_size: 16,
                    epochs: 30,
                    initial_lr: 1e-3,
                    schedule: Schedule::Constant,
                    mixup_ratio: 0.0,
                    mixup_alpha: 10.0,
                    time_mask_max: 0,
                    freq_mask_max: 0,
                    balanced_sampling: false,
                    loss: LossKind::Bce,
                    averaging: Averaging::Off,
                    seed: 0,
                },
                InitSource::Scratch,
            ),
            Preset::AudiosetBalanced => (
                AstConfig::base(527),
                TrainConfig::balanced_audioset(),
                vit_init(),
            ),
            Preset::AudiosetFull => (AstConfig::base(527), TrainConfig::full_audioset(), vit_init()),
            Preset::Esc => (
                AstConfig {
                    multi_label: false,
                    ..AstConfig::base(50).with_frames(512)
                },
                TrainConfig::esc(),
                vit_init(),
            ),
            Preset::Speechcommands => (
                AstConfig {
                    multi_label: false,
                    ..AstConfig::base(35).with_frames(128)
                },
                TrainConfig::speech_commands(),
                vit_init(),
            ),
        };
        RunConfig {
            preset: p,
            model,
            train,
            norm: None,
            data: DataPaths {
                train_split: "train".into(),
                eval_split: "eval".into(),
                ..DataPaths::default()
            },
            init,
            out_dir: PathBuf::from("runs").join(p.name()),
            seed: 0,
        }
    }

    /// Reads a JSON object and lays it over a preset: `preset` when given,
    /// else the object's `"preset"` key, else [`Preset::Tiny`].
    pub fn from_json(text: &str, preset: Option<Preset>) -> Result<Self> {
        let overrides: Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config is not valid JSON: {e}")))?;
        if !overrides.is_object() {
            return Err(Error::Config("config must be a JSON object".into()));
        }
        let mut overrides = overrides;
        let from_file = match overrides.get("preset") {
            Some(Value::String(s)) => Some(s.parse()?),
            Some(other) => return Err(Error::Config(format!("preset must be a string, got {other}"))),
            None => None,
        };
        let preset = preset.or(from_file).unwrap_or(Preset::Tiny);
        overrides["preset"] = Value::String(preset.name().into());
        let mut base = serde_json::to_value(Self::preset(preset)).expect("serializable");
        merge(&mut base, overrides);
        let cfg: RunConfig =
            serde_json::from_value(base).map_err(|e| Error::Config(format!("config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path, preset: Option<Preset>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, preset)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    /// Square patches of the configured size with `overlap` on both axes.
    pub fn set_overlap(&mut self, overlap: usize) -> Result<()> {
        let size = self.model.patch.patch_f;
        if self.model.patch.patch_t != size {
            return Err(Error::Config(format!(
                "--overlap needs square patches, configured {}",
                self.model.patch
            )));
        }
        self.model.patch = PatchSpec::square(size, overlap).map_err(|e| Error::Config(format!("--overlap {overlap}: {e}")))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate(&self.model)
    }
}

fn vit_init() -> InitSource {
    InitSource::Vit {
        path: None,
        mode: PosMode::Bilinear,
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
