use super::{AstConfig, AstParams, Block, ParamSet};
use crate::adapt::{adapt_grid, Interp};
use crate::dsp::Spectrogram;
use crate::error::{Error, Result};
use crate::patchify::{extract_patches, PatchGrid};
use crate::tensor::{Real, Tape, Tensor, Var, LN_EPS};

/// Handles produced by [`forward_tape`].
#[derive(Clone, Debug)]
pub struct ForwardPass {
    /// Head output before any activation, `1 × num_classes`.
    pub logits: Var,
    /// Sigmoid probabilities in multi-label mode, otherwise the logits.
    pub scores: Var,
    /// Attention weights, one `(N+1)×(N+1)` matrix per layer and head.
    pub attention: Vec<Var>,
}

/// Places every parameter on `tape`, tracking gradients when `trainable`.
pub fn register<T: Real>(tape: &mut Tape<T>, params: &AstParams<T>, trainable: bool) -> ParamSet<Var> {
    params.map(|t| {
        if trainable {
            tape.param(t.clone())
        } else {
            tape.constant(t.clone())
        }
    })
}

/// Row 0 is `cls + pos[0]`; row `i+1` is the projected patch `i` plus `pos[i+1]`.
pub fn embed<T: Real>(tape: &mut Tape<T>, patches: Var, p: &ParamSet<Var>) -> Result<Var> {
    let n = tape.value(patches).dims2().0;
    let (proj_out, proj_in) = tape.value(p.patch_proj_w).dims2();
    if tape.value(patches).dims2().1 != proj_in {
        return Err(Error::Config(format!(
            "patch length {} does not match projection input {proj_in}",
            tape.value(patches).dims2().1
        )));
    }
    let rows = tape.value(p.pos_embed).dims2().0;
    if rows != n + 1 {
        return Err(Error::Config(format!(
            "{n} patches need {} positional rows, table has {rows}",
            n + 1
        )));
    }
    let proj = tape.linear(patches, p.patch_proj_w, p.patch_proj_b)?;
    let cls = tape.reshape(p.cls, [1, proj_out])?;
    let tokens = tape.concat_rows(&[cls, proj])?;
    tape.add(tokens, p.pos_embed)
}

/// `x + MHSA(LN(x))` followed by `x + MLP(LN(x))`.
pub fn encoder_block<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    b: &Block<Var>,
    heads: usize,
    attention: Option<&mut Vec<Var>>,
) -> Result<Var> {
    let eps = T::of(LN_EPS);
    let d = tape.value(x).dims2().1;
    if !d.is_multiple_of(heads) {
        return Err(Error::Config(format!("width {d} not divisible by {heads} heads")));
    }
    let dh = d / heads;
    let scale = T::one() / T::of(dh as f64).sqrt();

    let h = tape.layer_norm(x, b.ln1_g, b.ln1_b, eps)?;
    let qkv = tape.linear(h, b.qkv_w, b.qkv_b)?;
    let mut outs = Vec::with_capacity(heads);
    let mut maps = Vec::with_capacity(heads);
    for head in 0..heads {
        let q = tape.cols(qkv, head * dh, dh)?;
        let k = tape.cols(qkv, d + head * dh, dh)?;
        let v = tape.cols(qkv, 2 * d + head * dh, dh)?;
        let s = tape.matmul_nt(q, k)?;
        let s = tape.scale(s, scale);
        let a = tape.softmax_rows(s);
        maps.push(a);
        outs.push(tape.matmul(a, v)?);
    }
    if let Some(sink) = attention {
        sink.extend(maps);
    }
    let o = if heads == 1 { outs[0] } else { tape.concat_cols(&outs)? };
    let o = tape.linear(o, b.proj_w, b.proj_b)?;
    let x = tape.add(x, o)?;

    let h = tape.layer_norm(x, b.ln2_g, b.ln2_b, eps)?;
    let h = tape.linear(h, b.mlp1_w, b.mlp1_b)?;
    let h = tape.gelu(h);
    let h = tape.linear(h, b.mlp2_w, b.mlp2_b)?;
    tape.add(x, h)
}

/// Embed, encode, final LN, head on the `[CLS]` row.
pub fn forward_tape<T: Real>(
    tape: &mut Tape<T>,
    patches: Var,
    p: &ParamSet<Var>,
    config: &AstConfig,
) -> Result<ForwardPass> {
    let mut attention = Vec::new();
    let mut x = embed(tape, patches, p)?;
    for b in &p.blocks {
        x = encoder_block(tape, x, b, config.heads, Some(&mut attention))?;
    }
    let x = tape.layer_norm(x, p.final_ln_g, p.final_ln_b, T::of(LN_EPS))?;
    let cls = tape.rows(x, 0, 1)?;
    let logits = tape.linear(cls, p.head_w, p.head_b)?;
    let scores = if config.multi_label {
        tape.sigmoid(logits)
    } else {
        logits
    };
    Ok(ForwardPass {
        logits,
        scores,
        attention,
    })
}

/// Training loss for one sample: BCE on sigmoid scores in multi-label mode,
/// softmax cross-entropy on the logits otherwise. `target` has one entry per class.
pub fn loss_on_tape<T: Real>(
    tape: &mut Tape<T>,
    pass: &ForwardPass,
    target: &[T],
    config: &AstConfig,
) -> Result<Var> {
    let t = Tensor::new([1, target.len()], target.to_vec())?;
    if config.multi_label {
        tape.bce(pass.scores, t)
    } else {
        tape.softmax_ce(pass.logits, t)
    }
}

/// Scores for already-extracted patches, `[num_classes]`.
pub fn forward_patches<T: Real>(
    patches: &Tensor<T>,
    params: &AstParams<T>,
    config: &AstConfig,
) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let vars = register(&mut tape, params, false);
    let x = tape.constant(patches.clone());
    let pass = forward_tape(&mut tape, x, &vars, config)?;
    tape.value(pass.scores).reshape([config.num_classes])
}

/// Scores for a padded, normalized spectrogram, `[num_classes]`.
pub fn forward(s: &Spectrogram, params: &AstParams, config: &AstConfig) -> Result<Tensor<f32>> {
    if s.frames() != config.target_frames || s.n_mels() != config.n_mels {
        return Err(Error::Geometry(format!(
            "model expects {}x{} (frames x bins), got {}x{}",
            config.target_frames,
            config.n_mels,
            s.frames(),
            s.n_mels()
        )));
    }
    let patches = extract_patches(s, &config.patch)?;
    forward_patches(&patches, params, config)
}

/// Re-grids the positional table for a new input length; row 0 is kept.
pub fn resize_positional<T: Real>(
    params: &AstParams<T>,
    old_grid: &PatchGrid,
    new_grid: &PatchGrid,
    interp: Interp,
) -> Result<AstParams<T>> {
    if old_grid.spec.patch_f != new_grid.spec.patch_f
        || old_grid.spec.patch_t != new_grid.spec.patch_t
    {
        return Err(Error::Geometry(format!(
            "patch shape changes from {} to {}; the projection cannot be reused",
            old_grid.spec, new_grid.spec
        )));
    }
    let (rows, d) = params.pos_embed.dims2();
    if rows != old_grid.num_patches() + 1 {
        return Err(Error::Geometry(format!(
            "positional table has {rows} rows, grid {}x{} needs {}",
            old_grid.n_f,
            old_grid.n_t,
            old_grid.num_patches() + 1
        )));
    }
    let mut out = params.clone();
    if old_grid.n_f == new_grid.n_f && old_grid.n_t == new_grid.n_t {
        return Ok(out);
    }
    let grid = Tensor::new(
        [old_grid.n_f, old_grid.n_t, d],
        params.pos_embed.data()[d..].to_vec(),
    )?;
    let resized = adapt_grid(&grid, new_grid.n_f, new_grid.n_t, interp)?;
    let mut data = params.pos_embed.data()[..d].to_vec();
    data.extend_from_slice(resized.data());
    out.pos_embed = Tensor::new([new_grid.num_patches() + 1, d], data)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patchify::PatchSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny(d: usize, heads: usize, depth: usize, classes: usize) -> AstConfig {
        AstConfig {
            embed_dim: d,
            depth,
            heads,
            mlp_ratio: 2,
            patch: PatchSpec::tiled(4, 4).unwrap(),
            n_mels: 8,
            target_frames: 12,
            num_classes: classes,
            multi_label: true,
            dropout: 0.0,
        }
    }

    fn randomize(p: &mut AstParams<f64>, rng: &mut ChaCha8Rng, scale: f64) {
        for t in p.slots_mut() {
            for v in t.data_mut() {
                *v = rng.random_range(-scale..scale);
            }
        }
    }

    #[test]
    fn embed_reduces_to_pos_table() {
        let cfg = tiny(8, 2, 1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p: AstParams<f64> = AstParams::init(&cfg, &mut rng).unwrap();
        p.cls = Tensor::zeros([8]);
        let mut tape = Tape::new();
        let vars = register(&mut tape, &p, false);
        let x = tape.constant(Tensor::zeros([6, 16]));
        let e = embed(&mut tape, x, &vars).unwrap();
        assert_eq!(tape.value(e), &p.pos_embed);
    }

    #[test]
    fn embed_identity_projection() {
        let mut cfg = tiny(16, 2, 1, 2);
        cfg.patch = PatchSpec::tiled(4, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p: AstParams<f64> = AstParams::init(&cfg, &mut rng).unwrap();
        p.patch_proj_w = Tensor::from_fn([16, 16], |i| if i / 16 == i % 16 { 1.0 } else { 0.0 });
        p.pos_embed = Tensor::zeros([7, 16]);
        p.cls = Tensor::zeros([16]);
        let patches = Tensor::from_fn([6, 16], |i| i as f64 * 0.1);
        let mut tape = Tape::new();
        let vars = register(&mut tape, &p, false);
        let x = tape.constant(patches.clone());
        let e = embed(&mut tape, x, &vars).unwrap();
        assert_eq!(&tape.value(e).data()[16..], patches.data());
    }

    #[test]
    fn embed_rejects_wrong_sequence_length() {
        let cfg = tiny(8, 2, 1, 2);
        let p: AstParams<f64> = AstParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut tape = Tape::new();
        let vars = register(&mut tape, &p, false);
        let x = tape.constant(Tensor::zeros([5, 16]));
        assert!(matches!(embed(&mut tape, x, &vars), Err(Error::Config(_))));
    }

    #[test]
    fn zero_gain_block_is_identity() {
        let cfg = tiny(8, 2, 1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p: AstParams<f64> = AstParams::init(&cfg, &mut rng).unwrap();
        randomize(&mut p, &mut rng, 1.0);
        let b = &mut p.blocks[0];
        for t in [&mut b.ln1_g, &mut b.ln1_b, &mut b.ln2_g, &mut b.ln2_b, &mut b.qkv_b, &mut b.proj_b, &mut b.mlp1_b, &mut b.mlp2_b] {
            *t = Tensor::zeros(t.shape().to_vec());
        }
        let x0 = Tensor::from_fn([7, 8], |_| rng.random_range(-1.0..1.0));
        let mut tape = Tape::new();
        let vars = register(&mut tape, &p, false);
        let x = tape.constant(x0.clone());
        let y = encoder_block(&mut tape, x, &vars.blocks[0], 2, None).unwrap();
        assert_eq!(tape.value(y), &x0);
    }

    #[test]
    fn single_token_attention_is_value_projection() {
        let cfg = tiny(8, 1, 1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p: AstParams<f64> = AstParams::init(&cfg, &mut rng).unwrap();
        randomize(&mut p, &mut rng, 0.5);
        let b = &p.blocks[0];
        let x0 = Tensor::from_fn([1, 8], |i| (i as f64 - 3.0) * 0.3);
        let mut tape = Tape::new();
        let vars = register(&mut tape, &p, false);
        let x = tape.constant(x0.clone());
        let mut maps = Vec::new();
        encoder_block(&mut tape, x, &vars.blocks[0], 1, Some(&mut maps)).unwrap();
        assert_eq!(tape.value(maps[0]).data(), &[1.0]);

        // x + proj(V(LN(x))) must equal the intermediate residual stream
        let ln = x0.layer_norm(&b.ln1_g, &b.ln1_b, 1e-6).unwrap();
        let qkv = ln.matmul_nt(&b.qkv_w).unwrap().add_row(&b.qkv_b).unwrap();
        let v = Tensor::new([1, 8], qkv.data()[16..24].to_vec()).unwrap();
        let o = v.matmul_nt(&b.proj_w).unwrap().add_row(&b.proj_b).unwrap();
        let want = x0.add(&o).unwrap();
        let mut tape = Tape::new();
        let vars = register(&mut tape, &p, false);
        let x = tape.constant(x0.clone());
        let ln1 = tape.layer_norm(x, vars.blocks[0].ln1_g, vars.blocks[0].ln1_b, 1e-6).unwrap();
        let q = tape.linear(ln1, vars.blocks[0].qkv_w, vars.blocks[0].qkv_b).unwrap();
        let vv = tape.cols(q, 16, 8).unwrap();
        let o2 = tape.linear(vv, vars.blocks[0].proj_w, vars.blocks[0].proj_b).unwrap();
        let got = tape.add(x, o2).unwrap();
        assert!(tape.value(got).max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn zero_head_gives_half() {
        let cfg = tiny(8, 2, 1, 3);
        let mut p: AstParams = AstParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        p.head_w = Tensor::zeros([3, 8]);
        let s = Spectrogram::new(Tensor::from_fn([12, 8], |i| (i % 5) as f32)).unwrap();
        let out = forward(&s, &p, &cfg).unwrap();
        assert_eq!(out.data(), &[0.5, 0.5, 0.5]);
        assert_eq!(forward(&s, &p, &cfg).unwrap(), out);
    }

    #[test]
    fn forward_rejects_unpadded_input() {
        let cfg = tiny(8, 2, 1, 3);
        let p: AstParams = AstParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let s = Spectrogram::new(Tensor::zeros([13, 8])).unwrap();
        assert!(matches!(forward(&s, &p, &cfg), Err(Error::Geometry(_))));
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let cfg = tiny(8, 2, 2, 2);
        let p: AstParams = AstParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let mut tape = Tape::new();
        let vars = register(&mut tape, &p, false);
        let x = tape.constant(Tensor::from_fn([6, 16], |i| ((i * 13) % 7) as f32 - 3.0));
        let pass = forward_tape(&mut tape, x, &vars, &cfg).unwrap();
        assert_eq!(pass.attention.len(), 4);
        for &a in &pass.attention {
            let t = tape.value(a);
            for r in 0..t.dims2().0 {
                let s: f32 = t.row(r).iter().sum();
                assert!((s - 1.0).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn resize_identity_constant_and_counts() {
        let cfg = AstConfig {
            embed_dim: 4,
            heads: 1,
            depth: 1,
            ..AstConfig::base(2)
        };
        let mut p: AstParams = AstParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let g1024 = cfg.grid().unwrap();
        let same = resize_positional(&p, &g1024, &g1024, Interp::Bilinear).unwrap();
        assert_eq!(same, p);
        let g512 = cfg.with_frames(512).grid().unwrap();
        assert_eq!((g512.n_f, g512.n_t), (12, 50));
        let r = resize_positional(&p, &g1024, &g512, Interp::Bilinear).unwrap();
        assert_eq!(r.pos_embed.shape(), &[12 * 50 + 1, 4]);
        assert_eq!(r.pos_embed.row(0), p.pos_embed.row(0));
        let half = PatchGrid { n_t: 51, ..g1024 };
        let r = resize_positional(&p, &g1024, &half, Interp::Nearest).unwrap();
        assert_eq!(r.pos_embed.shape(), &[12 * 51 + 1, 4]);

        p.pos_embed = Tensor::full([1213, 4], 0.25);
        for (grid, interp) in [(g512, Interp::Bilinear), (half, Interp::Nearest)] {
            let r = resize_positional(&p, &g1024, &grid, interp).unwrap();
            assert!(r.pos_embed.data().iter().all(|&v| v == 0.25));
        }
    }
}
