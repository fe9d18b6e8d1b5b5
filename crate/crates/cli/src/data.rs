use std::path::PathBuf;

use ast_core::adapt::{adapt_checkpoint, VitCheckpoint, VitSpec};
use ast_core::io::corpus::featurize_manifest;
use ast_core::io::{
    synth_dataset, vit_from_container, vit_to_container, AstCheckpoint, Container, Corpus, FeatureCache,
    InitSource, LabelMap, Manifest, SynthOptions,
};
use ast_core::{Error, Result};
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{create_dir, RunFlags};

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub samples: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Put every n-th clip in the eval split.
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub min_secs: f64,
    #[arg(long, default_value_t = 10.0)]
    pub max_secs: f64,
    /// Probability that a clip carries a second class.
    #[arg(long, default_value_t = 0.25)]
    pub multi_label_rate: f64,
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let opts = SynthOptions {
        multi_label_rate: a.multi_label_rate,
        eval_every: a.eval_every,
        min_secs: a.min_secs,
        max_secs: a.max_secs,
    };
    let (m, labels) = synth_dataset(a.samples, a.classes, a.seed, &a.out, &opts)?;
    println!(
        "wrote {} clips over {} classes to {}",
        m.rows.len(),
        labels.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[command(flatten)]
    pub run: RunFlags,
}

/// Writes `features.astc` and a copy of the label map into the output directory.
pub fn featurize(a: FeaturizeArgs) -> Result<()> {
    let cfg = a.run.resolve()?;
    let manifest_path = cfg
        .data
        .manifest
        .clone()
        .ok_or_else(|| Error::Config("featurize needs --manifest or data.manifest".into()))?;
    let labels = LabelMap::read(&cfg.data.label_path()?)?;
    let m = Manifest::read(&manifest_path)?;
    m.validate(&labels)?;
    let specs = featurize_manifest(&m)?;
    create_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join("features.astc");
    FeatureCache { rows: m.rows.clone(), specs }.save(&path)?;
    labels.write(&cfg.out_dir.join("labels.json"))?;
    println!("cached {} spectrograms in {}", m.rows.len(), path.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct InitVitArgs {
    #[command(flatten)]
    pub run: RunFlags,
    /// Use the full DeiT-base/384 layout instead of matching the configured encoder.
    #[arg(long)]
    pub deit: bool,
}

pub fn init_vit(a: InitVitArgs) -> Result<()> {
    let cfg = a.run.resolve()?;
    let spec = if a.deit {
        VitSpec::deit_base_384()
    } else {
        VitSpec::matching(&cfg.model, 2)
    };
    let v = VitCheckpoint::synthetic(&spec, &mut ChaCha8Rng::seed_from_u64(cfg.seed));
    create_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join("vit.astc");
    vit_to_container(&v)?.save(&path)?;
    println!(
        "wrote {}: width {}, depth {}, {}x{} grid, {} special tokens",
        path.display(),
        spec.embed_dim,
        spec.depth,
        spec.grid_side,
        spec.grid_side,
        spec.n_special
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct AdaptArgs {
    #[command(flatten)]
    pub run: RunFlags,
    /// Vision checkpoint; overrides `init.path`. Without one a seeded synthetic checkpoint is used.
    #[arg(long)]
    pub vit: Option<PathBuf>,
}

/// Writes `adapted.ckpt`. Class count and normalization statistics come from
/// the configured corpus when one is set.
pub fn adapt(a: AdaptArgs) -> Result<()> {
    let mut cfg = a.run.resolve()?;
    let (path, mode) = match &cfg.init {
        InitSource::Vit { path, mode } => (a.vit.clone().or(path.clone()), *mode),
        _ => (a.vit.clone(), ast_core::adapt::PosMode::Bilinear),
    };
    let mut stats = cfg.norm;
    if cfg.data.manifest.is_some() || cfg.data.features.is_some() {
        let corpus = Corpus::load(&cfg.data)?;
        cfg.model.num_classes = corpus.labels.len();
        if stats.is_none() {
            stats = Some(corpus.stats(&cfg.data.train_split)?);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vit = load_vit(path.as_deref(), &cfg.model, &mut rng)?;
    let (params, report) = adapt_checkpoint(&vit, &cfg.model, mode, &mut rng)?;
    create_dir(&cfg.out_dir)?;
    let out = cfg.out_dir.join("adapted.ckpt");
    AstCheckpoint::new(cfg.model.clone(), params, stats)
        .note("source", path.as_ref().map_or("synthetic".into(), |p| p.display().to_string()))
        .note("mode", mode)
        .save(&out)?;
    print!("{report}");
    println!("wrote {}", out.display());
    Ok(())
}

pub(crate) fn load_vit(
    path: Option<&std::path::Path>,
    model: &ast_core::model::AstConfig,
    rng: &mut ChaCha8Rng,
) -> Result<VitCheckpoint> {
    match path {
        Some(p) => vit_from_container(&Container::load(p)?).map_err(|e| match e {
            Error::Format(m) => Error::Data {
                path: p.to_path_buf(),
                message: m,
            },
            other => other,
        }),
        None => Ok(VitCheckpoint::synthetic(&VitSpec::matching(model, 2), rng)),
    }
}
