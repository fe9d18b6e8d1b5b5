//! Acceptance suite: one pass/fail line per criterion.
//!
//! Run with `cargo test -p ast-cli --test acceptance -- --nocapture` to see
//! the report. The test fails when the set of failing criteria differs from
//! `EXPECTED_RED`.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ast_core::adapt::{adapt_checkpoint, adapt_grid, Interp, PosMode, VitCheckpoint, VitSpec};
use ast_core::dsp::Spectrogram;
use ast_core::io::{synth_dataset, Corpus, DataPaths, Preset, RunConfig, SynthOptions};
use ast_core::metrics::{average_precision, run_stats};
use ast_core::model::{forward, forward_patches, forward_tape, loss_on_tape, register, resize_positional};
use ast_core::model::{AstConfig, AstParams};
use ast_core::patchify::{extract_patches, PatchSpec};
use ast_core::tensor::{Tape, Tensor};
use ast_core::train::{ensemble_predict, lr_at, train, weight_average, TrainConfig};
use ast_core::Error;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria known to be unattainable as stated.
const EXPECTED_RED: &[usize] = &[2];

type Verdict = Result<String, String>;
type Criterion<'a> = (usize, &'static str, Box<dyn Fn() -> Verdict + 'a>);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let pass: bool = $cond;
        if !pass {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn random_spec(frames: usize, bins: usize, rng: &mut ChaCha8Rng) -> Spectrogram {
    Spectrogram::new(Tensor::from_fn([frames, bins], |_| rng.random_range(-1.0..1.0))).unwrap()
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure!(elapsed < limit, "took {elapsed:?}, limit {limit:?}");
    Ok(())
}

fn c1_patch_geometry() -> Verdict {
    let start = Instant::now();
    let cases = [
        (PatchSpec::new(16, 16, 16, 16), 512),
        (PatchSpec::new(16, 16, 14, 14), 657),
        (PatchSpec::new(16, 16, 12, 12), 850),
        (PatchSpec::new(16, 16, 10, 10), 1212),
        (PatchSpec::tiled(128, 2), 512),
        (PatchSpec::tiled(32, 32), 128),
    ];
    let mut got = Vec::new();
    for (spec, want) in cases {
        let spec = ok(spec)?;
        let n = ok(spec.grid(128, 1024))?.num_patches();
        let s = Spectrogram::new(Tensor::zeros([1024, 128])).unwrap();
        let rows = ok(extract_patches(&s, &spec))?.shape()[0];
        ensure!(n == want && rows == want, "{spec}: grid {n}, extracted {rows}, expected {want}");
        got.push(n.to_string());
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("sequence lengths {}", got.join("/")))
}

fn c2_channel_averaging() -> Verdict {
    let cfg = AstConfig::tiny(5);
    let mut worst = 0f64;
    let mut worst_tripled = 0f64;
    for case in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + case);
        let vit = VitCheckpoint::synthetic(&VitSpec::matching(&cfg, 2), &mut rng);
        let (mono, _) = ok(adapt_checkpoint(&vit, &cfg, PosMode::Bilinear, &mut rng))?;
        let s = random_spec(cfg.target_frames, cfg.n_mels, &mut rng);
        let patches = ok(extract_patches(&s, &cfg.patch))?;
        let (n, len) = patches.dims2();
        let e = cfg.embed_dim;

        // Three identical input channels against the original kernel, channel-major.
        let replicated = Tensor::from_fn([n, 3 * len], |i| patches.data()[(i / (3 * len)) * len + i % len]);
        let mut rgb = mono.clone();
        rgb.patch_proj_w = ok(vit.patch_kernel.reshape([e, 3 * len]))?;
        let reference = ok(forward_patches(&replicated, &rgb, &cfg))?;
        let averaged = ok(forward_patches(&patches, &mono, &cfg))?;
        worst = worst.max(averaged.max_abs_diff(&reference));

        let mut tripled = mono.clone();
        tripled.patch_proj_w = mono.patch_proj_w.scale(3.0);
        worst_tripled = worst_tripled.max(ok(forward_patches(&patches, &tripled, &cfg))?.max_abs_diff(&reference));
    }
    let note = format!("(3 x averaged kernel matches within {worst_tripled:.2e})");
    ensure!(worst <= 1e-5, "max abs diff {worst:.3e} > 1e-5 {note}");
    Ok(format!("max abs diff {worst:.2e} {note}"))
}

fn c3_positional_adaptation() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let e = 6;
    for interp in [Interp::Bilinear, Interp::Nearest] {
        let src = Tensor::<f32>::from_fn([24, 24, e], |_| rng.random_range(-1.0..1.0));
        let same = ok(adapt_grid(&src, 24, 24, interp))?;
        ensure!(same == src, "{interp:?}: matching grids are not the identity");

        let c: f32 = rng.random_range(-2.0..2.0);
        let constant = ok(adapt_grid(&Tensor::full([24, 24, e], c), 12, 101, interp))?;
        ensure!(constant.data().iter().all(|&v| v == c), "{interp:?}: constant grid not preserved");

        for _ in 0..20 {
            let src = Tensor::<f32>::from_fn([24, 24, e], |_| rng.random_range(-3.0..3.0));
            let out = ok(adapt_grid(&src, 12, 101, interp))?;
            ensure!(out.shape() == [12, 101, e], "{interp:?}: shape {:?}", out.shape());
            for ch in 0..e {
                let col = |t: &Tensor<f32>| t.data().iter().skip(ch).step_by(e).copied().collect::<Vec<_>>();
                let (lo, hi) = col(&src).iter().fold((f32::MAX, f32::MIN), |(a, b), &v| (a.min(v), b.max(v)));
                ensure!(
                    col(&out).iter().all(|&v| v >= lo && v <= hi),
                    "{interp:?}: channel {ch} leaves [{lo}, {hi}]"
                );
            }
        }
    }
    // Time-axis ramp on the kept frequency band; align-corners sampling.
    let ramp = Tensor::<f64>::from_fn([24, 24, 1], |i| (i % 24) as f64 * 0.25 - 1.0);
    let out = ok(adapt_grid(&ramp, 12, 101, Interp::Bilinear))?;
    let mut worst = 0f64;
    for f in 0..12 {
        for t in 0..101 {
            let want = (t as f64 * 23.0 / 100.0) * 0.25 - 1.0;
            worst = worst.max((out.get(&[f, t, 0]) - want).abs());
        }
    }
    ensure!(worst <= 1e-6, "ramp error {worst:.3e}");
    Ok(format!("identity, constants, hull and 12x101 shape hold; ramp error {worst:.1e}"))
}

fn c4_gradient_check() -> Verdict {
    let start = Instant::now();
    let cfg = AstConfig {
        embed_dim: 8,
        depth: 2,
        heads: 2,
        mlp_ratio: 2,
        patch: ok(PatchSpec::tiled(8, 8))?,
        n_mels: 16,
        target_frames: 40,
        num_classes: 3,
        multi_label: true,
        dropout: 0.0,
    };
    let n = ok(cfg.grid())?.num_patches();
    ensure!(n <= 10, "sequence length {n}");
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params: AstParams<f64> = ok(AstParams::<f32>::init(&cfg, &mut rng))?.cast();
    let patches: Tensor<f64> = Tensor::from_fn([n, 64], |_| rng.random_range(-1.0..1.0));
    let target = [1.0, 0.0, 1.0];

    let loss_of = |p: &AstParams<f64>| -> f64 {
        let mut tape = Tape::new();
        let vars = register(&mut tape, p, false);
        let x = tape.constant(patches.clone());
        let pass = forward_tape(&mut tape, x, &vars, &cfg).unwrap();
        let l = loss_on_tape(&mut tape, &pass, &target, &cfg).unwrap();
        tape.value(l).data()[0]
    };
    let mut tape = Tape::new();
    let vars = register(&mut tape, &params, true);
    let x = tape.constant(patches.clone());
    let pass = ok(forward_tape(&mut tape, x, &vars, &cfg))?;
    let l = ok(loss_on_tape(&mut tape, &pass, &target, &cfg))?;
    let grads = ok(tape.backward(l))?;

    let h = 1e-5;
    let mut worst = (0f64, String::new());
    let mut count = 0;
    for (k, (name, var)) in vars.named().into_iter().enumerate() {
        let analytic = grads.get(*var).ok_or_else(|| format!("no gradient for {name}"))?;
        for idx in 0..analytic.numel() {
            let nudge = |delta: f64| {
                let mut p = params.clone();
                p.slots_mut()[k].data_mut()[idx] += delta;
                loss_of(&p)
            };
            let numeric = (nudge(h) - nudge(-h)) / (2.0 * h);
            let a = analytic.data()[idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            if rel > worst.0 {
                worst = (rel, format!("{name}[{idx}]"));
            }
            count += 1;
        }
    }
    within(start.elapsed(), Duration::from_secs(120))?;
    ensure!(worst.0 <= 1e-3, "max relative error {:.3e} at {}", worst.0, worst.1);
    Ok(format!("{count} parameters, max relative error {:.2e}", worst.0))
}

fn c5_permutation() -> Verdict {
    let cfg = AstConfig {
        depth: 2,
        ..AstConfig::tiny(4)
    };
    let mut worst = 0f64;
    for case in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(50 + case);
        let mut p = ok(AstParams::init(&cfg, &mut rng))?;
        let e = cfg.embed_dim;
        for v in &mut p.pos_embed.data_mut()[e..] {
            *v = 0.0;
        }
        let s = random_spec(cfg.target_frames, cfg.n_mels, &mut rng);
        let patches = ok(extract_patches(&s, &cfg.patch))?;
        let (n, len) = patches.dims2();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let shuffled = Tensor::from_fn([n, len], |i| patches.data()[order[i / len] * len + i % len]);
        let a = ok(forward_patches(&patches, &p, &cfg))?;
        let b = ok(forward_patches(&shuffled, &p, &cfg))?;
        worst = worst.max(a.max_abs_diff(&b));
    }
    ensure!(worst <= 1e-5, "scores moved by {worst:.3e}");
    Ok(format!("max score change {worst:.2e}"))
}

fn c6_variable_length() -> Verdict {
    let base = AstConfig {
        patch: ok(PatchSpec::square(16, 6))?,
        target_frames: 1024,
        ..AstConfig::tiny(4)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let vit = VitCheckpoint::synthetic(&VitSpec::matching(&base, 2), &mut rng);
    let (params, _) = ok(adapt_checkpoint(&vit, &base, PosMode::Bilinear, &mut rng))?;
    let old = ok(base.grid())?;
    let mut lens = Vec::new();
    for frames in [128, 512, 1024] {
        let cfg = base.with_frames(frames);
        let grid = ok(cfg.grid())?;
        let want = 12 * ((frames - 16) / 10 + 1);
        ensure!(grid.num_patches() == want, "{frames} frames: {} patches, expected {want}", grid.num_patches());
        let p = ok(resize_positional(&params, &old, &grid, Interp::Bilinear))?;
        ok(p.validate(&cfg))?;
        let out = ok(forward(&random_spec(frames, 128, &mut rng), &p, &cfg))?;
        ensure!(
            out.numel() == 4 && out.data().iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)),
            "{frames} frames: invalid scores {:?}",
            out.data()
        );
        lens.push(format!("{frames}->{want}"));
    }
    Ok(format!("frames->patches {}", lens.join(", ")))
}

fn c7_training_sanity(dir: &Path) -> Verdict {
    let start = Instant::now();
    let corpus_dir = dir.join("c7");
    ok(synth_dataset(16, 4, 7, &corpus_dir, &SynthOptions::default()))?;
    let corpus = ok(Corpus::load(&DataPaths {
        manifest: Some(corpus_dir.join("manifest.csv")),
        train_split: "train".into(),
        eval_split: "eval".into(),
        ..DataPaths::default()
    }))?;
    let run = RunConfig::preset(Preset::Tiny);
    let model = AstConfig::tiny(corpus.labels.len());
    let tc = TrainConfig {
        epochs: 200,
        seed: 7,
        ..run.train
    };
    let stats = ok(corpus.stats("train"))?;
    let data = ok(corpus.dataset(&corpus.indices("train"), &model, stats))?;
    let pool = ok(rayon::ThreadPoolBuilder::new().num_threads(1).build())?;
    let mut log = Vec::new();
    let result = pool.install(|| {
        let init = AstParams::init(&model, &mut ChaCha8Rng::seed_from_u64(7))?;
        train(&model, &tc, &data, &init, None, |rec, _| {
            log.push(rec.clone());
            if rec.epoch >= 10 && rec.eval_metric >= 0.99 {
                return Err(Error::Contract("target reached".into()));
            }
            Ok(())
        })
    });
    match result {
        Ok(_) | Err(Error::Contract(_)) => {}
        Err(e) => return Err(e.to_string()),
    }
    within(start.elapsed(), Duration::from_secs(300))?;
    ensure!(log.len() >= 10, "only {} epochs ran", log.len());
    for w in log[..10].windows(2) {
        ensure!(
            w[1].train_loss < w[0].train_loss,
            "loss rose from {:.6} to {:.6} at epoch {}",
            w[0].train_loss,
            w[1].train_loss,
            w[1].epoch
        );
    }
    let best = log.iter().map(|r| r.eval_metric).fold(0.0, f64::max);
    ensure!(best >= 0.99, "best train mAP {best:.4} after {} epochs", log.len());
    Ok(format!(
        "train mAP {best:.4} at epoch {} on one thread in {:.1?}",
        log.len(),
        start.elapsed()
    ))
}

fn c8_schedules() -> Verdict {
    // Independent oracles: repeated multiplication from the start epoch.
    let check = |tc: TrainConfig, after: usize, every: usize, factor: f64| -> Result<(), String> {
        let mut lr = tc.initial_lr;
        for epoch in 1..=tc.epochs + 5 {
            if epoch > after && (epoch - after - 1).is_multiple_of(every) {
                lr *= factor;
            }
            let got = lr_at(epoch, &tc);
            ensure!(got == lr, "epoch {epoch}: {got:e} vs {lr:e}");
        }
        Ok(())
    };
    let b = TrainConfig::balanced_audioset();
    ensure!(b.initial_lr == 5e-5, "balanced initial lr {}", b.initial_lr);
    check(b, 10, 5, 0.5)?;
    let f = TrainConfig::full_audioset();
    ensure!(f.initial_lr == 1e-5, "full initial lr {}", f.initial_lr);
    check(f, 2, 1, 0.5)?;
    let e = TrainConfig::esc();
    ensure!(e.initial_lr == 1e-4, "esc initial lr {}", e.initial_lr);
    check(e, 5, 1, 0.85)?;
    Ok("balanced, full and ESC sequences match".into())
}

fn c9_aggregation() -> Verdict {
    let cfg = AstConfig::tiny(3);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let ckpts: Vec<AstParams> = (0..4).map(|_| AstParams::init(&cfg, &mut rng).unwrap()).collect();
    let avg = ok(weight_average(&ckpts))?;
    let mut worst = 0f64;
    for (k, slot) in avg.slots().into_iter().enumerate() {
        for (i, &v) in slot.data().iter().enumerate() {
            let mean = ckpts.iter().map(|c| c.slots()[k].data()[i] as f64).sum::<f64>() / 4.0;
            worst = worst.max((v as f64 - mean).abs());
        }
    }
    ensure!(worst <= 1e-6, "elementwise mean off by {worst:.3e}");
    let mut shuffled = ckpts.clone();
    shuffled.reverse();
    shuffled.swap(0, 2);
    let perm = ok(weight_average(&shuffled))?;
    let moved = avg.slots().iter().zip(perm.slots()).map(|(a, b)| a.max_abs_diff(b)).fold(0.0, f64::max);
    ensure!(moved <= 1e-6, "permutation changes the average by {moved:.3e}");
    let member = Tensor::<f32>::from_fn([6, 3], |_| rng.random_range(0.0..1.0));
    let ens = ok(ensemble_predict(&vec![member.clone(); 5]))?;
    ensure!(ens == member, "ensemble of identical members differs");
    Ok(format!("mean error {worst:.1e}, permutation change {moved:.1e}, identical ensemble exact"))
}

/// Walks the ranking prefix by prefix without sorting: the item at rank `r`
/// is the one with exactly `r` items ranked above it (ties keep input order).
fn brute_force_ap(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return None;
    }
    let above = |k: usize| {
        (0..scores.len())
            .filter(|&j| scores[j] > scores[k] || (scores[j] == scores[k] && j < k))
            .count()
    };
    let rank: Vec<usize> = (0..scores.len()).map(above).collect();
    let mut total = 0.0;
    for len in 1..=scores.len() {
        let last = rank.iter().position(|&r| r == len - 1).expect("ranks are a permutation");
        if !labels[last] {
            continue;
        }
        let hits = (0..scores.len()).filter(|&j| rank[j] < len && labels[j]).count();
        total += hits as f64 / len as f64;
    }
    Some(total / positives as f64)
}

fn c10_metrics() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0f64;
    for case in 0..200 {
        let n = rng.random_range(1..=64);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        let got = ok(average_precision(&scores, &labels))?;
        let want = brute_force_ap(&scores, &labels);
        match (got, want) {
            (Some(g), Some(w)) => worst = worst.max((g - w).abs()),
            (None, None) => {}
            other => return Err(format!("case {case}: {other:?}")),
        }
    }
    ensure!(worst == 0.0, "AP differs from enumeration by {worst:e}");
    let worked = ok(average_precision(&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false]))?.unwrap_or(f64::NAN);
    ensure!((worked - 0.8333).abs() <= 1e-4, "worked case {worked}");
    let rendered = ok(run_stats(&[0.346, 0.347, 0.348]))?.render(3);
    ensure!(rendered == "0.347±0.001", "rendered {rendered:?}");
    Ok(format!("200 AP instances exact, worked case {worked:.4}, {rendered}"))
}

fn ast(args: &[&str]) -> Result<std::process::Output, String> {
    let out = ok(Command::new(env!("CARGO_BIN_EXE_ast")).args(args).output())?;
    if !out.status.success() {
        return Err(format!(
            "ast {} exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out)
}

fn c11_determinism(dir: &Path) -> Verdict {
    let corpus = dir.join("c11");
    let corpus_s = corpus.to_str().unwrap();
    ast(&["synth", "--out", corpus_s, "--samples", "12", "--classes", "3", "--seed", "11", "--eval-every", "4"])?;
    let manifest = corpus.join("manifest.csv");
    let cfg = dir.join("c11.json");
    ok(std::fs::write(
        &cfg,
        r#"{"preset": "tiny", "train": {"batch_size": 4, "mixup_ratio": 0.5, "time_mask_max": 24, "freq_mask_max": 16}}"#,
    ))?;
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.join(format!("c11_{name}"));
        ast(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--manifest",
            manifest.to_str().unwrap(),
            "--seed",
            "5",
            "--epochs",
            "4",
            "--quiet",
            "--out",
            out.to_str().unwrap(),
        ])?;
        runs.push(out);
    }
    for file in ["metrics.jsonl", "epoch_4.ckpt", "averaged.ckpt"] {
        let a = ok(std::fs::read(runs[0].join(file)))?;
        let b = ok(std::fs::read(runs[1].join(file)))?;
        ensure!(a == b, "{file} differs between runs");
    }
    let lines = ok(std::fs::read_to_string(runs[0].join("metrics.jsonl")))?.lines().count();
    ensure!(lines == 4, "{lines} metric lines");
    Ok("metric logs and final checkpoints byte-identical".into())
}

fn c12_ablation(dir: &Path) -> Verdict {
    let cfg = dir.join("c12.json");
    ok(std::fs::write(
        &cfg,
        r#"{"preset": "tiny", "model": {"target_frames": 1024}, "train": {"epochs": 1, "batch_size": 8}}"#,
    ))?;
    let out = dir.join("c12");
    let o = ast(&[
        "ablate",
        "--config",
        cfg.to_str().unwrap(),
        "--corpus-samples",
        "8",
        "--quiet",
        "--out",
        out.to_str().unwrap(),
    ])?;
    let text = String::from_utf8_lossy(&o.stdout).into_owned();
    let cells = |line: &str| -> Vec<String> {
        line.trim().trim_matches('|').split('|').map(|c| c.trim().to_string()).collect()
    };
    let find = |label: &str| -> Result<Vec<String>, String> {
        text.lines()
            .find(|l| l.starts_with('|') && cells(l)[0] == label)
            .map(cells)
            .ok_or_else(|| format!("no row {label:?}"))
    };
    let headers = [
        "| | Balanced Set |",
        "| | # Patches | Balanced Set | Full Set |",
        "| | # Patches | w/o Pretrain | w/ Pretrain |",
    ];
    let normalized: Vec<String> = text
        .lines()
        .filter(|l| l.starts_with('|'))
        .map(|l| format!("| {} |", cells(l).join(" | ")).replace("|  |", "| |"))
        .collect();
    for h in headers {
        ensure!(normalized.iter().any(|l| l == h), "missing header {h:?}");
    }
    for label in ["Reinitialize", "Nearest Neighbor Interpolation", "Bilinear Interpolation"] {
        let row = find(label)?;
        ensure!(row.len() == 2 && row[1].parse::<f64>().is_ok(), "row {row:?}");
    }
    for (label, n) in [("No Overlap", 512), ("Overlap-2", 657), ("Overlap-4", 850), ("Overlap-6", 1212)] {
        let row = find(label)?;
        ensure!(row.len() == 4 && row[1] == n.to_string(), "row {row:?}, expected {n} patches");
        ensure!(row[2].parse::<f64>().is_ok() && row[3].parse::<f64>().is_ok(), "row {row:?}");
    }
    for (label, n, pre) in [("128×2", 512, false), ("16×16", 512, true), ("32×32", 128, false)] {
        let row = find(label)?;
        ensure!(row.len() == 4 && row[1] == n.to_string(), "row {row:?}, expected {n} patches");
        ensure!(row[2].parse::<f64>().is_ok(), "row {row:?}");
        ensure!(if pre { row[3].parse::<f64>().is_ok() } else { row[3] == "-" }, "row {row:?}");
    }
    ensure!(out.join("ablation.md").is_file(), "ablation.md not written");
    Ok("positional, overlap and patch tables with 512/657/850/1212 and 512/512/128 patch columns".into())
}

#[test]
fn acceptance() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let criteria: Vec<Criterion> = vec![
        (1, "patch geometry", Box::new(c1_patch_geometry)),
        (2, "channel-averaging equivalence", Box::new(c2_channel_averaging)),
        (3, "positional-embedding adaptation", Box::new(c3_positional_adaptation)),
        (4, "gradient correctness", Box::new(c4_gradient_check)),
        (5, "permutation property", Box::new(c5_permutation)),
        (6, "variable length", Box::new(c6_variable_length)),
        (7, "training sanity", Box::new(|| c7_training_sanity(d))),
        (8, "learning-rate schedules", Box::new(c8_schedules)),
        (9, "aggregation algebra", Box::new(c9_aggregation)),
        (10, "metric oracles", Box::new(c10_metrics)),
        (11, "determinism", Box::new(|| c11_determinism(d))),
        (12, "ablation harness", Box::new(|| c12_ablation(d))),
    ];
    let mut red = Vec::new();
    for (id, name, check) in &criteria {
        let start = Instant::now();
        let verdict = check();
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail} [{secs:.1}s]"),
            Err(why) => {
                println!("criterion {id:>2} FAIL  {name}: {why} [{secs:.1}s]");
                red.push(*id);
            }
        }
    }
    assert_eq!(red, EXPECTED_RED, "failing criteria differ from the expected set");
}
