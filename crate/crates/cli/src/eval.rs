use std::path::{Path, PathBuf};

use ast_core::dsp::featurize_file;
use ast_core::io::{AstCheckpoint, Corpus, LabelMap};
use ast_core::metrics::{evaluate, EvalResult};
use ast_core::model::forward;
use ast_core::tensor::Tensor;
use ast_core::train::{ensemble_predict, predict_batch, weight_average};
use ast_core::{Error, Result};
use clap::Args;
use serde::Deserialize;

use crate::{create_dir, write_file, RunFlags};

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunFlags,
    /// Checkpoints to score; several are also scored as an output ensemble.
    pub checkpoints: Vec<PathBuf>,
    /// Ensemble manifest: `{"members": [{"checkpoint": PATH}, ...]}`.
    #[arg(long)]
    pub ensemble: Option<PathBuf>,
    /// Score the weight average of the checkpoints instead of each one.
    #[arg(long)]
    pub average: bool,
    /// Split to score; defaults to the configured eval split.
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Debug, Deserialize)]
struct EnsembleFile {
    members: Vec<EnsembleMember>,
}

#[derive(Debug, Deserialize)]
struct EnsembleMember {
    checkpoint: PathBuf,
}

fn read_ensemble(path: &Path) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let e: EnsembleFile = serde_json::from_str(&text).map_err(|err| Error::Data {
        path: path.to_path_buf(),
        message: format!("ensemble manifest: {err}"),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(e.members.into_iter().map(|m| base.join(m.checkpoint)).collect())
}

/// Class scores in `[0, 1]`: sigmoid outputs as is, logits through a softmax.
fn probabilities(scores: Tensor<f32>, multi_label: bool) -> Tensor<f32> {
    if multi_label {
        scores
    } else {
        scores.softmax_rows()
    }
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let cfg = a.run.resolve()?;
    let mut paths = a.checkpoints.clone();
    if let Some(e) = &a.ensemble {
        paths.extend(read_ensemble(e)?);
    }
    if paths.is_empty() {
        return Err(Error::Config("eval needs at least one checkpoint or --ensemble".into()));
    }
    let members = paths
        .iter()
        .map(|p| AstCheckpoint::load(p))
        .collect::<Result<Vec<_>>>()?;
    let corpus = Corpus::load(&cfg.data)?;
    let mut split = a.split.clone().unwrap_or_else(|| cfg.data.eval_split.clone());
    if corpus.indices(&split).is_empty() && a.split.is_none() {
        eprintln!("no rows in split {split:?}; scoring the training split");
        split = cfg.data.train_split.clone();
    }
    let idx = corpus.indices(&split);
    if idx.is_empty() {
        return Err(Error::Input(format!("split {split:?} is empty")));
    }
    let multi_label = members[0].config.multi_label;
    for (p, m) in paths.iter().zip(&members) {
        if m.config.num_classes != corpus.labels.len() {
            return Err(Error::Data {
                path: p.clone(),
                message: format!(
                    "model has {} classes, label map has {}",
                    m.config.num_classes,
                    corpus.labels.len()
                ),
            });
        }
        if m.config.multi_label != multi_label {
            return Err(Error::Config("ensemble mixes multi-label and single-label members".into()));
        }
    }
    let members = if a.average {
        let first = &members[0];
        if members.iter().any(|m| m.config != first.config) {
            return Err(Error::Config("weight averaging needs identical architectures".into()));
        }
        let params: Vec<_> = members.iter().map(|m| m.params.clone()).collect();
        vec![AstCheckpoint::new(first.config.clone(), weight_average(&params)?, first.stats)]
    } else {
        members
    };

    let rows: Vec<Vec<f32>> = idx.iter().map(|&i| corpus.labels.multi_hot(&corpus.rows[i].labels)).collect();
    let targets = Tensor::from_rows(&rows)?;
    let mut outputs = Vec::new();
    let mut report = String::new();
    let mut last: Option<EvalResult> = None;
    for (k, m) in members.iter().enumerate() {
        let stats = match (m.stats, cfg.norm) {
            (Some(s), _) | (None, Some(s)) => s,
            (None, None) => corpus.stats(&cfg.data.train_split)?,
        };
        let ds = corpus.dataset(&idx, &m.config, stats)?;
        let scores = probabilities(predict_batch(&m.params, &m.config, &ds.inputs)?, multi_label);
        let r = evaluate(&scores, &targets, multi_label)?;
        let name = if a.average {
            format!("weight average of {} checkpoints", paths.len())
        } else {
            paths[k].display().to_string()
        };
        report += &format!("[{name}]\nsplit: {split}\n{}", r.report());
        outputs.push(scores);
        last = Some(r);
    }
    if outputs.len() > 1 {
        let r = evaluate(&ensemble_predict(&outputs)?, &targets, multi_label)?;
        report += &format!("[ensemble of {}]\nsplit: {split}\n{}", outputs.len(), r.report());
        last = Some(r);
    }
    print!("{report}");
    if let Some(out) = &a.run.out {
        create_dir(out)?;
        write_file(&out.join("eval.txt"), &report)?;
        let csv_path = out.join("per_class.csv");
        let file = std::fs::File::create(&csv_path).map_err(|source| Error::Io {
            path: csv_path.clone(),
            source,
        })?;
        last.expect("at least one member").write_csv(file)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    pub checkpoint: PathBuf,
    pub wav: PathBuf,
    /// Label map used to name classes.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub top: usize,
}

pub fn predict(a: PredictArgs) -> Result<()> {
    let ck = AstCheckpoint::load(&a.checkpoint)?;
    if ck.stats.is_none() {
        eprintln!("checkpoint has no normalization statistics; scoring unnormalized features");
    }
    let labels = a.labels.as_deref().map(LabelMap::read).transpose()?;
    let spec = featurize_file(&a.wav, ck.config.target_frames, ck.stats)?;
    let scores = forward(&spec, &ck.params, &ck.config)?;
    let scores = probabilities(scores.reshape([1, ck.config.num_classes])?, ck.config.multi_label);
    let mut ranked: Vec<(usize, f32)> = scores.data().iter().copied().enumerate().collect();
    ranked.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    for (rank, (c, s)) in ranked.iter().take(a.top.max(1)).enumerate() {
        let name = labels.as_ref().and_then(|l| l.name(*c)).unwrap_or("");
        println!("{:>2}  {s:.6}  {c:>4}  {name}", rank + 1);
    }
    Ok(())
}
