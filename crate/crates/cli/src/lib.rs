//! Command implementations behind the `ast` binary.

use std::path::{Path, PathBuf};

use ast_core::adapt::PosMode;
use ast_core::io::{InitSource, Preset, RunConfig};
use ast_core::patchify::PatchSpec;
use ast_core::{Error, Result};
use clap::{Args, Parser, Subcommand};

mod ablate;
mod data;
mod eval;
mod train;

#[derive(Debug, Parser)]
#[command(name = "ast", version, about = "Audio Spectrogram Transformer toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic tagging corpus (WAV clips, manifest, label map).
    Synth(data::SynthArgs),
    /// Compute log-Mel features for every manifest row into a cache file.
    Featurize(data::FeaturizeArgs),
    /// Write a seeded synthetic vision-transformer checkpoint.
    InitVit(data::InitVitArgs),
    /// Turn a vision-transformer checkpoint into AST initial weights.
    Adapt(data::AdaptArgs),
    /// Train a model and write checkpoints plus a metric log.
    Train(train::TrainArgs),
    /// Score checkpoints, weight averages or ensembles on a split.
    Eval(eval::EvalArgs),
    /// Score one WAV file.
    Predict(eval::PredictArgs),
    /// Run the patch-overlap, patch-shape and positional-embedding sweeps.
    Ablate(ablate::AblateArgs),
}

/// Options shared by every command that reads a run configuration.
#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    /// JSON run configuration laid over the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// tiny | audioset-balanced | audioset-full | esc | speechcommands
    #[arg(long, value_parser = parse_preset)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Positional-embedding adaptation: bilinear | nearest | reinit.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<PosMode>,
    /// Patch overlap on both axes (square patches only).
    #[arg(long)]
    pub overlap: Option<usize>,
    /// Non-overlapping patch shape, e.g. 16x16 or 128x2.
    #[arg(long, value_parser = parse_patch)]
    pub patch: Option<PatchSpec>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Feature cache written by `featurize`.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Label map JSON; defaults to labels.json beside the manifest or cache.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

fn parse_preset(s: &str) -> std::result::Result<Preset, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_mode(s: &str) -> std::result::Result<PosMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_patch(s: &str) -> std::result::Result<PatchSpec, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl RunFlags {
    /// Preset, then config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p, self.preset)?,
            None => RunConfig::preset(self.preset.unwrap_or(Preset::Tiny)),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.train.seed = cfg.seed;
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        if let Some(m) = self.mode {
            cfg.init = match cfg.init {
                InitSource::Vit { path, .. } => InitSource::Vit { path, mode: m },
                _ => InitSource::Vit { path: None, mode: m },
            };
        }
        if let Some(p) = self.patch {
            cfg.model.patch = p;
        }
        if let Some(o) = self.overlap {
            cfg.set_overlap(o)?;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(m) = &self.manifest {
            cfg.data.manifest = Some(m.clone());
            cfg.data.features = None;
        }
        if let Some(f) = &self.features {
            cfg.data.features = Some(f.clone());
        }
        if let Some(l) = &self.labels {
            cfg.data.labels = Some(l.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => data::synth(a),
        Command::Featurize(a) => data::featurize(a),
        Command::InitVit(a) => data::init_vit(a),
        Command::Adapt(a) => data::adapt(a),
        Command::Train(a) => train::train(a),
        Command::Eval(a) => eval::eval(a),
        Command::Predict(a) => eval::predict(a),
        Command::Ablate(a) => ablate::ablate(a),
    }
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
