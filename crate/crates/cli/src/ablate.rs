use std::fmt::Write as _;

use ast_core::adapt::{adapt_checkpoint, PosMode, VitCheckpoint, VitSpec};
use ast_core::io::{synth_dataset, Corpus, RunConfig, SynthOptions};
use ast_core::model::{AstConfig, AstParams};
use ast_core::patchify::PatchSpec;
use ast_core::train::{self as pipeline, evaluate_params, Averaging, TrainConfig};
use ast_core::Result;
use clap::{Args, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::train::{prepare, Prepared};
use crate::{create_dir, write_file, RunFlags};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sweep {
    /// Positional-embedding adaptation modes.
    Pos,
    /// Patch overlap 0, 2, 4, 6.
    Overlap,
    /// Patch shapes 128x2, 16x16, 32x32.
    Patch,
    All,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub run: RunFlags,
    #[arg(long, value_enum, default_values_t = [Sweep::All])]
    pub sweep: Vec<Sweep>,
    /// Clips in the synthetic corpus generated when no data is configured.
    #[arg(long, default_value_t = 16)]
    pub corpus_samples: usize,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Clone, Copy)]
enum Init {
    Scratch,
    Adapt(PosMode),
}

fn mode_label(m: PosMode) -> &'static str {
    match m {
        PosMode::Reinit => "Reinitialize",
        PosMode::Nearest => "Nearest Neighbor Interpolation",
        PosMode::Bilinear => "Bilinear Interpolation",
    }
}

struct Runner {
    cfg: RunConfig,
    data: Prepared,
    vit: VitCheckpoint,
    quiet: bool,
}

impl Runner {
    /// Headline metric of the (averaged) weights after training one row.
    fn score(&self, label: &str, model: &AstConfig, train: &TrainConfig, init: Init) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let initial = match init {
            Init::Scratch => AstParams::init(model, &mut rng)?,
            Init::Adapt(mode) => adapt_checkpoint(&self.vit, model, mode, &mut rng)?.0,
        };
        let out = pipeline::train(model, train, &self.data.train, &initial, self.data.eval.as_ref(), |_, _| Ok(()))?;
        let eval = self.data.eval.as_ref().unwrap_or(&self.data.train);
        let r = evaluate_params(&out.averaged, model, eval)?;
        let v = r.accuracy.unwrap_or(r.map);
        if !self.quiet {
            eprintln!("{label:<34} {v:.4}");
        }
        Ok(v)
    }

    fn with_patch(&self, patch: PatchSpec) -> AstConfig {
        AstConfig {
            patch,
            ..self.cfg.model.clone()
        }
    }

    fn positional(&self) -> Result<Table> {
        let mut t = Table::new("Positional embedding adaptation", &["", "Balanced Set"]);
        for mode in PosMode::ALL {
            let v = self.score(mode_label(mode), &self.cfg.model, &self.cfg.train, Init::Adapt(mode))?;
            t.row(vec![mode_label(mode).into(), fmt(v)]);
        }
        Ok(t)
    }

    fn overlap(&self) -> Result<Table> {
        let mut t = Table::new("Patch split overlap", &["", "# Patches", "Balanced Set", "Full Set"]);
        let full = TrainConfig {
            balanced_sampling: true,
            averaging: Averaging::All,
            ..self.cfg.train.clone()
        };
        for overlap in [0, 2, 4, 6] {
            let model = self.with_patch(PatchSpec::square(16, overlap)?);
            let label = if overlap == 0 {
                "No Overlap".to_string()
            } else {
                format!("Overlap-{overlap}")
            };
            let n = model.grid()?.num_patches();
            let bal = self.score(&format!("{label} (balanced)"), &model, &self.cfg.train, Init::Adapt(PosMode::Bilinear))?;
            let ful = self.score(&format!("{label} (full)"), &model, &full, Init::Adapt(PosMode::Bilinear))?;
            t.row(vec![label, n.to_string(), fmt(bal), fmt(ful)]);
        }
        Ok(t)
    }

    fn patch(&self) -> Result<Table> {
        let mut t = Table::new("Patch shape and size", &["", "# Patches", "w/o Pretrain", "w/ Pretrain"]);
        for (f, tt) in [(128, 2), (16, 16), (32, 32)] {
            let model = self.with_patch(PatchSpec::tiled(f, tt)?);
            let label = format!("{f}×{tt}");
            let n = model.grid()?.num_patches();
            let scratch = self.score(&format!("{label} (scratch)"), &model, &self.cfg.train, Init::Scratch)?;
            let pre = if (f, tt) == (16, 16) {
                fmt(self.score(&format!("{label} (pretrained)"), &model, &self.cfg.train, Init::Adapt(PosMode::Bilinear))?)
            } else {
                "-".into()
            };
            t.row(vec![label, n.to_string(), fmt(scratch), pre]);
        }
        Ok(t)
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

struct Table {
    title: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(title: &str, header: &[&str]) -> Self {
        Table {
            title: title.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    fn render(&self) -> String {
        let n = self.header.len();
        let widths: Vec<usize> = (0..n)
            .map(|c| {
                std::iter::once(&self.header)
                    .chain(&self.rows)
                    .map(|r| r[c].chars().count())
                    .max()
                    .unwrap_or(0)
                    .max(3)
            })
            .collect();
        let line = |cells: &[String]| {
            let mut s = String::from("|");
            for (c, w) in cells.iter().zip(&widths) {
                let pad = w - c.chars().count();
                write!(s, " {c}{} |", " ".repeat(pad)).unwrap();
            }
            s + "\n"
        };
        let mut s = format!("{}\n\n", self.title);
        s += &line(&self.header);
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        s += &line(&rule);
        for r in &self.rows {
            s += &line(r);
        }
        s
    }
}

pub fn ablate(a: AblateArgs) -> Result<()> {
    let mut cfg = a.run.resolve()?;
    create_dir(&cfg.out_dir)?;
    if cfg.data.manifest.is_none() && cfg.data.features.is_none() {
        let dir = cfg.out_dir.join("corpus");
        if !a.quiet {
            eprintln!("no data configured; generating a synthetic corpus in {}", dir.display());
        }
        let opts = SynthOptions {
            max_secs: (cfg.model.target_frames as f64 / 100.0).max(1.0),
            ..SynthOptions::default()
        };
        synth_dataset(a.corpus_samples, 4, cfg.seed, &dir, &opts)?;
        cfg.data.manifest = Some(dir.join("manifest.csv"));
    }
    let corpus = Corpus::load(&cfg.data)?;
    cfg.model.num_classes = corpus.labels.len();
    cfg.validate()?;
    let data = prepare(&corpus, &cfg, &cfg.model)?;
    let sixteen = AstConfig {
        patch: PatchSpec::tiled(16, 16)?,
        ..cfg.model.clone()
    };
    let vit = VitCheckpoint::synthetic(&VitSpec::matching(&sixteen, 2), &mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let sweeps = if a.sweep.contains(&Sweep::All) {
        vec![Sweep::Pos, Sweep::Overlap, Sweep::Patch]
    } else {
        let mut s = a.sweep.clone();
        s.dedup();
        s
    };
    let runner = Runner {
        cfg,
        data,
        vit,
        quiet: a.quiet,
    };
    let mut doc = format!(
        "input {}x{} (bins x frames), {} training clips, {} epochs per row\n",
        runner.cfg.model.n_mels,
        runner.cfg.model.target_frames,
        runner.data.train.len(),
        runner.cfg.train.epochs
    );
    for s in sweeps {
        let table = match s {
            Sweep::Pos => runner.positional()?,
            Sweep::Overlap => runner.overlap()?,
            Sweep::Patch => runner.patch()?,
            Sweep::All => unreachable!("expanded above"),
        };
        doc += "\n";
        doc += &table.render();
    }
    print!("{doc}");
    let path = runner.cfg.out_dir.join("ablation.md");
    write_file(&path, &doc)?;
    if !a.quiet {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}
