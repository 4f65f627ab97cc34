use super::{AttentionVars, BlockVars, ConvVars, HeadVars, LinearVars, ModelConfig, ModelKind, ModelParams, ModelVars};
use crate::cohort::DemographicsRecord;
use crate::error::{contract_err, dim_err, Result};
use crate::tensor::{Real, Tape, Tensor, Var};
use crate::volume::{Intensity, Volume};

pub const LN_EPS: f64 = 1e-5;

/// Converts a normalized cube into the `[1, N, N, N]` stem input.
pub fn volume_input<T: Real>(cfg: &ModelConfig, v: &Volume) -> Result<Tensor<T>> {
    if v.intensity() != Intensity::Norm255 {
        return Err(contract_err!("model input must be normalized to 0-255, got HU"));
    }
    let n = cfg.input_cube;
    if v.dims() != [n, n, n] {
        return Err(contract_err!(
            "model expects a {n}³ volume, got {:?}",
            v.dims()
        ));
    }
    let s = cfg.input_scale;
    Tensor::new(
        vec![1, n, n, n],
        v.values().iter().map(|&x| T::lit(f64::from(x) * s)).collect(),
    )
}

/// Strided kernel-2 convolutions, each followed by relu.
pub fn cnn_stem<T: Real>(tape: &mut Tape<T>, stem: &[ConvVars], x: Var) -> Result<Var> {
    let mut h = x;
    for c in stem {
        let y = tape.conv3d(h, c.weight, c.bias, 2)?;
        h = tape.relu(y);
    }
    Ok(h)
}

/// Flat source index for each element of the patch matrix of a
/// `[channels, m, m, m]` feature map. Patches run z-major, then y, then x;
/// within a patch the layout is (dz, dy, dx, channel).
pub fn patchify_index(channels: usize, m: usize, patch: usize) -> Result<Vec<usize>> {
    if patch == 0 || m % patch != 0 {
        return Err(dim_err!("feature extent {m} not divisible by patch {patch}"));
    }
    let g = m / patch;
    let mut idx = Vec::with_capacity(channels * m * m * m);
    for bz in 0..g {
        for by in 0..g {
            for bx in 0..g {
                for dz in 0..patch {
                    for dy in 0..patch {
                        for dx in 0..patch {
                            let (z, y, x) = (bz * patch + dz, by * patch + dy, bx * patch + dx);
                            for c in 0..channels {
                                idx.push(((c * m + z) * m + y) * m + x);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(idx)
}

/// `[C, M, M, M] -> [(M/p)³, C·p³]`.
pub fn patchify<T: Real>(tape: &mut Tape<T>, f: Var, patch: usize) -> Result<Var> {
    let (c, m) = match *tape.shape(f) {
        [c, a, b, d] if a == b && b == d => (c, a),
        ref s => return Err(dim_err!("patchify expects a [C,M,M,M] cube, got {s:?}")),
    };
    let idx = patchify_index(c, m, patch)?;
    let tokens = (m / patch).pow(3);
    tape.gather(f, idx, vec![tokens, c * patch.pow(3)])
}

pub fn linear<T: Real>(tape: &mut Tape<T>, x: Var, l: &LinearVars) -> Result<Var> {
    let y = tape.matmul(x, l.weight)?;
    tape.add_bias(y, l.bias)
}

/// One `[1, D]` token from the raw demographic vector.
pub fn embed_demographics<T: Real>(
    tape: &mut Tape<T>,
    d: &DemographicsRecord,
    l: &LinearVars,
) -> Result<Var> {
    let f = d.features();
    let x = tape.constant(Tensor::from_f64(&[1, f.len()], &f)?);
    linear(tape, x, l)
}

/// Appends the optional demographics token after the patch tokens and adds
/// the positional table.
pub fn assemble_sequence<T: Real>(
    tape: &mut Tape<T>,
    patch_tokens: Var,
    demo_token: Option<Var>,
    positional: Var,
) -> Result<Var> {
    let seq = match demo_token {
        Some(d) => tape.concat_rows(&[patch_tokens, d])?,
        None => patch_tokens,
    };
    if tape.shape(seq) != tape.shape(positional) {
        return Err(dim_err!(
            "positional table {:?} does not match sequence {:?}",
            tape.shape(positional),
            tape.shape(seq)
        ));
    }
    tape.add(seq, positional)
}

#[derive(Debug, Clone)]
pub struct AttentionOutput {
    pub output: Var,
    /// Post-softmax `[T, T]` weights, one per head.
    pub weights: Vec<Var>,
}

pub fn multi_head_attention<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    p: &AttentionVars,
) -> Result<AttentionOutput> {
    let (t, d) = match *tape.shape(x) {
        [t, d] => (t, d),
        ref s => return Err(dim_err!("attention input must be [T,D], got {s:?}")),
    };
    if p.heads == 0 || d % p.heads != 0 {
        return Err(dim_err!("width {d} not divisible into {} heads", p.heads));
    }
    let dk = d / p.heads;
    let q = tape.matmul(x, p.w_q)?;
    let k = tape.matmul(x, p.w_k)?;
    let v = tape.matmul(x, p.w_v)?;
    let inv = T::lit(1.0 / (dk as f64).sqrt());
    let mut outs = Vec::with_capacity(p.heads);
    let mut weights = Vec::with_capacity(p.heads);
    for h in 0..p.heads {
        let qh = tape.slice_cols(q, h * dk, dk)?;
        let kh = tape.slice_cols(k, h * dk, dk)?;
        let vh = tape.slice_cols(v, h * dk, dk)?;
        let kt = tape.transpose(kh)?;
        let s = tape.matmul(qh, kt)?;
        let s = tape.scale(s, inv);
        let a = tape.softmax_lastdim(s)?;
        weights.push(a);
        outs.push(tape.matmul(a, vh)?);
    }
    let concat = if p.heads == 1 {
        outs[0]
    } else {
        // stacked [heads·T, dk] -> [T, heads·dk]
        let stacked = tape.concat_rows(&outs)?;
        let idx = (0..t)
            .flat_map(|i| (0..p.heads).flat_map(move |h| (0..dk).map(move |j| (h * t + i) * dk + j)))
            .collect();
        tape.gather(stacked, idx, vec![t, d])?
    };
    let output = tape.matmul(concat, p.w_o)?;
    Ok(AttentionOutput { output, weights })
}

/// Pre-norm residual block: attention, then a gelu MLP.
pub fn transformer_block<T: Real>(tape: &mut Tape<T>, x: Var, b: &BlockVars) -> Result<Var> {
    let n1 = tape.layer_norm(x, b.ln1_gain, b.ln1_shift, LN_EPS)?;
    let a = multi_head_attention(tape, n1, &b.attn)?.output;
    let h = tape.add(x, a)?;
    let n2 = tape.layer_norm(h, b.ln2_gain, b.ln2_shift, LN_EPS)?;
    let m = linear(tape, n2, &b.fc1)?;
    let m = tape.gelu(m);
    let m = linear(tape, m, &b.fc2)?;
    tape.add(h, m)
}

/// Mean-pool over rows, then three linear layers with relu between.
pub fn regression_head<T: Real>(tape: &mut Tape<T>, x: Var, h: &HeadVars) -> Result<Var> {
    let pooled = tape.mean_rows(x)?;
    let y = linear(tape, pooled, &h.fc1)?;
    let y = tape.relu(y);
    let y = linear(tape, y, &h.fc2)?;
    let y = tape.relu(y);
    linear(tape, y, &h.fc3)
}

/// Everything after patchify: embedding, sequence assembly, blocks and head.
pub fn forward_tokens<T: Real>(
    tape: &mut Tape<T>,
    vars: &ModelVars,
    cfg: &ModelConfig,
    tokens: Var,
    demographics: Option<&DemographicsRecord>,
) -> Result<Var> {
    let (pe, pos) = match (&vars.patch_embed, vars.pos_embed) {
        (Some(pe), Some(pos)) => (pe, pos),
        _ => return Err(contract_err!("token path requires the transformer variant")),
    };
    let emb = linear(tape, tokens, pe)?;
    let demo = match (&vars.demo_embed, cfg.use_demographics) {
        (Some(l), true) => {
            let d = demographics
                .ok_or_else(|| contract_err!("model uses demographics but none were supplied"))?;
            d.validate()?;
            Some(embed_demographics(tape, d, l)?)
        }
        _ => None,
    };
    let mut h = assemble_sequence(tape, emb, demo, pos)?;
    for b in &vars.blocks {
        h = transformer_block(tape, h, b)?;
    }
    regression_head(tape, h, &vars.head)
}

/// Full forward pass for either model kind, returning a `[1, 1]` prediction.
pub fn forward<T: Real>(
    tape: &mut Tape<T>,
    vars: &ModelVars,
    cfg: &ModelConfig,
    volume: &Volume,
    demographics: Option<&DemographicsRecord>,
) -> Result<Var> {
    let x = tape.constant(volume_input(cfg, volume)?);
    let f = cnn_stem(tape, &vars.stem, x)?;
    match cfg.kind {
        ModelKind::BeyondCt => {
            let tokens = patchify(tape, f, cfg.patch)?;
            forward_tokens(tape, vars, cfg, tokens, demographics)
        }
        ModelKind::CnnBaseline => {
            let c = tape.shape(f)[0];
            let voxels = tape.value(f).numel() / c;
            let flat = tape.reshape(f, &[c, voxels])?;
            let rows = tape.transpose(flat)?;
            regression_head(tape, rows, &vars.head)
        }
    }
}

/// Mean absolute error of `[1, 1]` predictions against targets.
pub fn mae_loss<T: Real>(tape: &mut Tape<T>, preds: &[Var], actual: &[f64]) -> Result<Var> {
    if preds.len() != actual.len() || preds.is_empty() {
        return Err(dim_err!(
            "{} predictions vs {} targets",
            preds.len(),
            actual.len()
        ));
    }
    let p = tape.concat_rows(preds)?;
    if tape.shape(p) != [actual.len(), 1] {
        return Err(dim_err!("predictions must be [1,1] each"));
    }
    let a = tape.constant(Tensor::from_f64(&[actual.len(), 1], actual)?);
    let d = tape.sub(p, a)?;
    let d = tape.abs(d);
    Ok(tape.mean(d))
}

/// Inference without retaining a tape.
pub fn predict<T: Real>(
    params: &ModelParams<T>,
    volume: &Volume,
    demographics: Option<&DemographicsRecord>,
) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let y = forward(&mut tape, &vars, params.config(), volume, demographics)?;
    let v = tape.value(y).item().expect("scalar prediction").as_f64();
    if !v.is_finite() {
        return Err(crate::Error::NonFinite("prediction is not finite".into()));
    }
    Ok(v)
}
