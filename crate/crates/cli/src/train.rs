use std::fs::File;
use std::io::{BufWriter, Write};

use ast_core::adapt::adapt_checkpoint;
use ast_core::dsp::CorpusStats;
use ast_core::io::{AstCheckpoint, Corpus, InitSource, RunConfig};
use ast_core::model::{AstConfig, AstParams};
use ast_core::train::{self as pipeline, evaluate_params, Dataset};
use ast_core::{Error, Result};
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::load_vit;
use crate::{create_dir, RunFlags};

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunFlags,
    /// Suppress per-epoch progress on stderr.
    #[arg(long)]
    pub quiet: bool,
}

/// Training and evaluation sets of a run, built from its corpus.
pub(crate) struct Prepared {
    pub stats: CorpusStats,
    pub train: Dataset,
    pub eval: Option<Dataset>,
}

pub(crate) fn prepare(corpus: &Corpus, cfg: &RunConfig, model: &AstConfig) -> Result<Prepared> {
    let stats = match cfg.norm {
        Some(s) => s,
        None => corpus.stats(&cfg.data.train_split)?,
    };
    let train_idx = corpus.indices(&cfg.data.train_split);
    let eval_idx = corpus.indices(&cfg.data.eval_split);
    let train = corpus.dataset(&train_idx, model, stats)?;
    let eval = if eval_idx.is_empty() {
        None
    } else {
        Some(corpus.dataset(&eval_idx, model, stats)?)
    };
    Ok(Prepared { stats, train, eval })
}

pub(crate) fn initial_params(init: &InitSource, model: &AstConfig, rng: &mut ChaCha8Rng) -> Result<AstParams> {
    match init {
        InitSource::Scratch => AstParams::init(model, rng),
        InitSource::Vit { path, mode } => {
            let vit = load_vit(path.as_deref(), model, rng)?;
            Ok(adapt_checkpoint(&vit, model, *mode, rng)?.0)
        }
        InitSource::Checkpoint { path } => {
            let ck = AstCheckpoint::load(path)?;
            ck.params.validate(model).map_err(|e| {
                Error::Config(format!(
                    "{} does not fit the configured architecture: {e}",
                    path.display()
                ))
            })?;
            Ok(ck.params)
        }
    }
}

fn checkpoint(cfg: &RunConfig, params: &AstParams, stats: CorpusStats, epoch: usize) -> AstCheckpoint {
    AstCheckpoint::new(cfg.model.clone(), params.clone(), Some(stats))
        .note("preset", cfg.preset)
        .note("seed", cfg.seed)
        .note("epoch", epoch)
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = a.run.resolve()?;
    let corpus = Corpus::load(&cfg.data)?;
    cfg.model.num_classes = corpus.labels.len();
    cfg.validate()?;
    let data = prepare(&corpus, &cfg, &cfg.model)?;
    if data.eval.is_none() && !a.quiet {
        eprintln!(
            "no rows in split {:?}; reporting the metric on the training split",
            cfg.data.eval_split
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let initial = initial_params(&cfg.init, &cfg.model, &mut rng)?;
    let out = cfg.out_dir.clone();
    create_dir(&out)?;
    checkpoint(&cfg, &initial, data.stats, 0).save(&out.join("initial.ckpt"))?;
    if cfg.train.epochs == 0 {
        println!("wrote {}", out.join("initial.ckpt").display());
        return Ok(());
    }

    let log_path = out.join("metrics.jsonl");
    let io_err = |source| Error::Io {
        path: log_path.clone(),
        source,
    };
    let mut log = BufWriter::new(File::create(&log_path).map_err(io_err)?);
    let outcome = pipeline::train(
        &cfg.model,
        &cfg.train,
        &data.train,
        &initial,
        data.eval.as_ref(),
        |rec, params| {
            let line = serde_json::to_string(rec).map_err(|e| Error::Format(e.to_string()))?;
            writeln!(log, "{line}").map_err(io_err)?;
            log.flush().map_err(io_err)?;
            checkpoint(&cfg, params, data.stats, rec.epoch).save(&out.join(format!("epoch_{}.ckpt", rec.epoch)))?;
            if !a.quiet {
                eprintln!(
                    "epoch {:>3}  lr {:.3e}  loss {:.5}  metric {:.4}",
                    rec.epoch, rec.lr, rec.train_loss, rec.eval_metric
                );
            }
            Ok(())
        },
    )?;
    checkpoint(&cfg, &outcome.averaged, data.stats, cfg.train.epochs)
        .note("averaging", format!("{:?}", cfg.train.averaging))
        .save(&out.join("averaged.ckpt"))?;

    let eval_set = data.eval.as_ref().unwrap_or(&data.train);
    let last = evaluate_params(&outcome.last, &cfg.model, eval_set)?;
    let averaged = evaluate_params(&outcome.averaged, &cfg.model, eval_set)?;
    println!("last epoch:");
    print!("{}", last.report());
    println!("weight-averaged:");
    print!("{}", averaged.report());
    println!("wrote checkpoints and {} to {}", log_path.display(), out.display());
    Ok(())
}
