use super::ops::{
    add_assign, gelu, gelu_grad, layer_norm, layer_norm_backward, linear, linear_backward, NormCache,
};
use super::{EncoderConfig, EncoderWeights, HeadVariant, LayerWeights, Logits, Mode, ModelError, Result};
use crate::rng::{self, Rng};

/// Per-layer activations, `(num_layers + 1) × seq_len × hidden_dim`; layer 0
/// is the embedding output. Positions at or past `valid_len` are padding.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenStates {
    layers: Vec<Vec<f64>>,
    seq_len: usize,
    valid_len: usize,
    hidden_dim: usize,
}

impl HiddenStates {
    pub fn new(layers: Vec<Vec<f64>>, seq_len: usize, valid_len: usize, hidden_dim: usize) -> Self {
        assert!(layers.iter().all(|l| l.len() == seq_len * hidden_dim));
        assert!(valid_len <= seq_len);
        HiddenStates {
            layers,
            seq_len,
            valid_len,
            hidden_dim,
        }
    }

    /// Number of encoder layers (excludes the embedding layer).
    pub fn num_layers(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn valid_len(&self) -> usize {
        self.valid_len
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn layer(&self, index: usize) -> &[f64] {
        &self.layers[index]
    }

    pub fn vector(&self, layer: usize, position: usize) -> &[f64] {
        let d = self.hidden_dim;
        &self.layers[layer][position * d..(position + 1) * d]
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().flatten().all(|x| x.is_finite())
    }
}

fn check_dropout(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(ModelError::Parameter(format!("dropout probability {p} outside [0, 1)")));
    }
    Ok(())
}

/// Inverted-dropout scale factors (0 or `1/(1-p)`), or `None` when dropout is a no-op.
fn dropout_mask(len: usize, p: f64, mode: Mode, rng: &mut Rng) -> Option<Vec<f64>> {
    if mode == Mode::Eval || p == 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    Some(
        (0..len)
            .map(|_| if rng::unit(rng) < p { 0.0 } else { keep })
            .collect(),
    )
}

fn apply_mask(x: &mut [f64], mask: &Option<Vec<f64>>) {
    if let Some(m) = mask {
        for (v, s) in x.iter_mut().zip(m) {
            *v *= s;
        }
    }
}

/// Eval mode: identity. Train mode: each unit zeroed with probability `p`,
/// survivors scaled by `1/(1-p)`.
pub fn apply_dropout(v: &[f64], p: f64, mode: Mode, rng: &mut Rng) -> Result<Vec<f64>> {
    check_dropout(p)?;
    let mut out = v.to_vec();
    apply_mask(&mut out, &dropout_mask(v.len(), p, mode, rng));
    Ok(out)
}

/// First-position vector of the last layer through the tanh pooler.
pub fn pool_standard(states: &HiddenStates, weights: &EncoderWeights) -> Result<Vec<f64>> {
    if states.seq_len == 0 || states.valid_len == 0 {
        return Err(ModelError::EmptySequence);
    }
    let d = states.hidden_dim;
    let first = states.vector(states.num_layers(), 0);
    let mut u = linear(first, &weights.pooler_w.data, &weights.pooler_b.data, 1, d, d);
    u.iter_mut().for_each(|x| *x = x.tanh());
    Ok(u)
}

/// `mean over valid positions of (H_L + H_{L-1}) / 2`.
pub fn pool_mean_last_two(states: &HiddenStates) -> Result<Vec<f64>> {
    if states.num_layers() < 2 {
        return Err(ModelError::Config(format!(
            "mean_last_two pooling needs at least 2 layers, got {}",
            states.num_layers()
        )));
    }
    if states.valid_len == 0 {
        return Err(ModelError::EmptySequence);
    }
    let d = states.hidden_dim;
    let last = states.num_layers();
    let scale = 0.5 / states.valid_len as f64;
    let mut out = vec![0.0; d];
    for pos in 0..states.valid_len {
        for layer in [last, last - 1] {
            for (acc, x) in out.iter_mut().zip(states.vector(layer, pos)) {
                *acc += x * scale;
            }
        }
    }
    Ok(out)
}

/// Affine map of the pooled vector to (negative, positive) logits.
pub fn classify(pooled: &[f64], weights: &EncoderWeights) -> Result<Logits> {
    let d = weights.classifier_w.shape[0];
    if pooled.len() != d {
        return Err(ModelError::Dimension {
            expected: d,
            found: pooled.len(),
        });
    }
    let z = linear(pooled, &weights.classifier_w.data, &weights.classifier_b.data, 1, d, 2);
    Ok(Logits::new(z[0], z[1]))
}

#[derive(Debug, Clone)]
struct LayerTrace {
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    probs: Vec<f64>,
    ctx: Vec<f64>,
    attn_mask: Option<Vec<f64>>,
    attn_norm: NormCache,
    h1: Vec<f64>,
    ff_pre: Vec<f64>,
    ff_act: Vec<f64>,
    ff_mask: Option<Vec<f64>>,
    ff_norm: NormCache,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub hidden: HiddenStates,
    pub logits: Logits,
    ids: Vec<u32>,
    num_heads: usize,
    head_variant: HeadVariant,
    embed_norm: NormCache,
    embed_mask: Option<Vec<f64>>,
    layers: Vec<LayerTrace>,
    pooled: Vec<f64>,
    head_mask: Option<Vec<f64>>,
    pooled_dropped: Vec<f64>,
}

impl ForwardTrace {
    /// Attention probabilities of one layer, laid out `heads × seq_len × seq_len`.
    pub fn attention_probs(&self, layer: usize) -> &[f64] {
        &self.layers[layer].probs
    }

    pub fn num_heads(&self) -> usize {
        self.num_heads
    }

    /// Pooled vector before head dropout.
    pub fn pooled(&self) -> &[f64] {
        &self.pooled
    }
}

fn check_input(ids: &[u32], valid_len: usize, config: &EncoderConfig) -> Result<()> {
    if ids.is_empty() || valid_len == 0 {
        return Err(ModelError::EmptySequence);
    }
    if ids.len() > config.max_seq_len {
        return Err(ModelError::SequenceTooLong {
            len: ids.len(),
            max: config.max_seq_len,
        });
    }
    if valid_len > ids.len() {
        return Err(ModelError::Dimension {
            expected: ids.len(),
            found: valid_len,
        });
    }
    if let Some(&id) = ids.iter().find(|&&id| id as usize >= config.vocab_size) {
        return Err(ModelError::TokenOutOfRange {
            id,
            vocab_size: config.vocab_size,
        });
    }
    Ok(())
}

fn layer_forward(
    x: &[f64],
    lw: &LayerWeights,
    config: &EncoderConfig,
    seq: usize,
    valid: usize,
    mode: Mode,
    rng: &mut Rng,
) -> (Vec<f64>, LayerTrace) {
    let d = config.hidden_dim;
    let heads = config.num_heads;
    let dh = config.head_dim();
    let ff = config.ff_dim;
    let scale = 1.0 / (dh as f64).sqrt();

    let q = linear(x, &lw.query_w.data, &lw.query_b.data, seq, d, d);
    let k = linear(x, &lw.key_w.data, &lw.key_b.data, seq, d, d);
    let v = linear(x, &lw.value_w.data, &lw.value_b.data, seq, d, d);

    let mut probs = vec![0.0; heads * seq * seq];
    let mut ctx = vec![0.0; seq * d];
    let mut scores = vec![0.0; valid];
    for h in 0..heads {
        let off = h * dh;
        for i in 0..seq {
            let qi = &q[i * d + off..i * d + off + dh];
            for (j, s) in scores.iter_mut().enumerate() {
                let kj = &k[j * d + off..j * d + off + dh];
                *s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
            }
            // Keys past `valid` are padding: probability exactly 0.
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let row = &mut probs[(h * seq + i) * seq..(h * seq + i) * seq + valid];
            let mut sum = 0.0;
            for (p, s) in row.iter_mut().zip(&scores) {
                *p = (s - max).exp();
                sum += *p;
            }
            for p in row.iter_mut() {
                *p /= sum;
            }
            let out = &mut ctx[i * d + off..i * d + off + dh];
            for (j, &p) in row.iter().enumerate() {
                let vj = &v[j * d + off..j * d + off + dh];
                for (o, x) in out.iter_mut().zip(vj) {
                    *o += p * x;
                }
            }
        }
    }

    let mut attn_out = linear(&ctx, &lw.attn_out_w.data, &lw.attn_out_b.data, seq, d, d);
    let attn_mask = dropout_mask(attn_out.len(), config.dropout_p, mode, rng);
    apply_mask(&mut attn_out, &attn_mask);
    add_assign(&mut attn_out, x);
    let (h1, attn_norm) = layer_norm(&attn_out, &lw.attn_norm_gamma.data, &lw.attn_norm_beta.data);

    let ff_pre = linear(&h1, &lw.ff_in_w.data, &lw.ff_in_b.data, seq, d, ff);
    let ff_act: Vec<f64> = ff_pre.iter().map(|&z| gelu(z)).collect();
    let mut ff_out = linear(&ff_act, &lw.ff_out_w.data, &lw.ff_out_b.data, seq, ff, d);
    let ff_mask = dropout_mask(ff_out.len(), config.dropout_p, mode, rng);
    apply_mask(&mut ff_out, &ff_mask);
    add_assign(&mut ff_out, &h1);
    let (out, ff_norm) = layer_norm(&ff_out, &lw.ff_norm_gamma.data, &lw.ff_norm_beta.data);

    (
        out,
        LayerTrace {
            q,
            k,
            v,
            probs,
            ctx,
            attn_mask,
            attn_norm,
            h1,
            ff_pre,
            ff_act,
            ff_mask,
            ff_norm,
        },
    )
}

/// Forward pass over `ids`, of which the first `valid_len` are real tokens and
/// the rest padding (masked out of attention and mean pooling).
pub fn forward_trace(
    ids: &[u32],
    valid_len: usize,
    weights: &EncoderWeights,
    config: &EncoderConfig,
    mode: Mode,
    rng: &mut Rng,
) -> Result<ForwardTrace> {
    check_input(ids, valid_len, config)?;
    let d = config.hidden_dim;
    let seq = ids.len();

    let mut emb = vec![0.0; seq * d];
    for (t, &id) in ids.iter().enumerate() {
        let tok = &weights.token_embedding.data[id as usize * d..(id as usize + 1) * d];
        let pos = &weights.position_embedding.data[t * d..(t + 1) * d];
        for ((e, a), b) in emb[t * d..(t + 1) * d].iter_mut().zip(tok).zip(pos) {
            *e = a + b;
        }
    }
    let (mut x, embed_norm) = layer_norm(&emb, &weights.embed_norm_gamma.data, &weights.embed_norm_beta.data);
    let embed_mask = dropout_mask(x.len(), config.dropout_p, mode, rng);
    apply_mask(&mut x, &embed_mask);

    let mut hidden = vec![x];
    let mut layers = Vec::with_capacity(config.num_layers);
    for lw in &weights.layers {
        let (out, trace) = layer_forward(hidden.last().unwrap(), lw, config, seq, valid_len, mode, rng);
        hidden.push(out);
        layers.push(trace);
    }
    let hidden = HiddenStates::new(hidden, seq, valid_len, d);

    let pooled = match config.head_variant {
        HeadVariant::StandardPooled => pool_standard(&hidden, weights)?,
        HeadVariant::MeanLastTwo => pool_mean_last_two(&hidden)?,
    };
    let head_mask = dropout_mask(d, config.head_dropout(), mode, rng);
    let mut pooled_dropped = pooled.clone();
    apply_mask(&mut pooled_dropped, &head_mask);
    let logits = classify(&pooled_dropped, weights)?;

    Ok(ForwardTrace {
        hidden,
        logits,
        ids: ids.to_vec(),
        num_heads: config.num_heads,
        head_variant: config.head_variant,
        embed_norm,
        embed_mask,
        layers,
        pooled,
        head_mask,
        pooled_dropped,
    })
}

/// Forward pass over an unpadded sequence. In eval mode the generator is not
/// touched and the result is deterministic.
pub fn forward(
    ids: &[u32],
    weights: &EncoderWeights,
    config: &EncoderConfig,
    mode: Mode,
    rng: &mut Rng,
) -> Result<(HiddenStates, Logits)> {
    let trace = forward_trace(ids, ids.len(), weights, config, mode, rng)?;
    Ok((trace.hidden, trace.logits))
}

#[allow(clippy::too_many_arguments)]
fn layer_backward(
    dout: &[f64],
    x: &[f64],
    tr: &LayerTrace,
    lw: &LayerWeights,
    gw: &mut LayerWeights,
    config: &EncoderConfig,
    seq: usize,
    valid: usize,
) -> Vec<f64> {
    let d = config.hidden_dim;
    let heads = config.num_heads;
    let dh = config.head_dim();
    let ff = config.ff_dim;
    let scale = 1.0 / (dh as f64).sqrt();

    let dr2 = layer_norm_backward(
        dout,
        &tr.ff_norm,
        &lw.ff_norm_gamma.data,
        &mut gw.ff_norm_gamma.data,
        &mut gw.ff_norm_beta.data,
    );
    let mut dh1 = dr2.clone();
    let mut dff_out = dr2;
    apply_mask(&mut dff_out, &tr.ff_mask);
    let mut dff = linear_backward(
        &dff_out,
        &tr.ff_act,
        &lw.ff_out_w.data,
        &mut gw.ff_out_w.data,
        &mut gw.ff_out_b.data,
        seq,
        ff,
        d,
    );
    for (g, &z) in dff.iter_mut().zip(&tr.ff_pre) {
        *g *= gelu_grad(z);
    }
    let dh1_ff = linear_backward(
        &dff,
        &tr.h1,
        &lw.ff_in_w.data,
        &mut gw.ff_in_w.data,
        &mut gw.ff_in_b.data,
        seq,
        d,
        ff,
    );
    add_assign(&mut dh1, &dh1_ff);

    let dr1 = layer_norm_backward(
        &dh1,
        &tr.attn_norm,
        &lw.attn_norm_gamma.data,
        &mut gw.attn_norm_gamma.data,
        &mut gw.attn_norm_beta.data,
    );
    let mut dx = dr1.clone();
    let mut dattn = dr1;
    apply_mask(&mut dattn, &tr.attn_mask);
    let dctx = linear_backward(
        &dattn,
        &tr.ctx,
        &lw.attn_out_w.data,
        &mut gw.attn_out_w.data,
        &mut gw.attn_out_b.data,
        seq,
        d,
        d,
    );

    let mut dq = vec![0.0; seq * d];
    let mut dk = vec![0.0; seq * d];
    let mut dv = vec![0.0; seq * d];
    let mut dp = vec![0.0; valid];
    for h in 0..heads {
        let off = h * dh;
        for i in 0..seq {
            let row = &tr.probs[(h * seq + i) * seq..(h * seq + i) * seq + valid];
            let dci = &dctx[i * d + off..i * d + off + dh];
            for (j, dpj) in dp.iter_mut().enumerate() {
                let vj = &tr.v[j * d + off..j * d + off + dh];
                *dpj = dci.iter().zip(vj).map(|(a, b)| a * b).sum();
                for (g, c) in dv[j * d + off..j * d + off + dh].iter_mut().zip(dci) {
                    *g += row[j] * c;
                }
            }
            let weighted: f64 = row.iter().zip(&dp).map(|(p, g)| p * g).sum();
            for j in 0..valid {
                let ds = row[j] * (dp[j] - weighted) * scale;
                if ds == 0.0 {
                    continue;
                }
                for c in 0..dh {
                    dq[i * d + off + c] += ds * tr.k[j * d + off + c];
                    dk[j * d + off + c] += ds * tr.q[i * d + off + c];
                }
            }
        }
    }

    for (dy, w, gw_w, gw_b) in [
        (&dq, &lw.query_w, &mut gw.query_w, &mut gw.query_b),
        (&dk, &lw.key_w, &mut gw.key_w, &mut gw.key_b),
        (&dv, &lw.value_w, &mut gw.value_w, &mut gw.value_b),
    ] {
        let g = linear_backward(dy, x, &w.data, &mut gw_w.data, &mut gw_b.data, seq, d, d);
        add_assign(&mut dx, &g);
    }
    dx
}

/// Accumulates into `grads` the gradient of a loss whose derivative with
/// respect to the (negative, positive) logits is `dlogits`.
pub fn backward(
    trace: &ForwardTrace,
    dlogits: [f64; 2],
    weights: &EncoderWeights,
    config: &EncoderConfig,
    grads: &mut EncoderWeights,
) {
    let d = config.hidden_dim;
    let seq = trace.hidden.seq_len;
    let valid = trace.hidden.valid_len;
    let num_layers = trace.hidden.num_layers();

    let mut dpooled = linear_backward(
        &dlogits,
        &trace.pooled_dropped,
        &weights.classifier_w.data,
        &mut grads.classifier_w.data,
        &mut grads.classifier_b.data,
        1,
        d,
        2,
    );
    apply_mask(&mut dpooled, &trace.head_mask);

    let mut dhidden: Vec<Vec<f64>> = vec![vec![0.0; seq * d]; num_layers + 1];
    match trace.head_variant {
        HeadVariant::StandardPooled => {
            let du: Vec<f64> = dpooled
                .iter()
                .zip(&trace.pooled)
                .map(|(g, p)| g * (1.0 - p * p))
                .collect();
            let dfirst = linear_backward(
                &du,
                trace.hidden.vector(num_layers, 0),
                &weights.pooler_w.data,
                &mut grads.pooler_w.data,
                &mut grads.pooler_b.data,
                1,
                d,
                d,
            );
            add_assign(&mut dhidden[num_layers][..d], &dfirst);
        }
        HeadVariant::MeanLastTwo => {
            let scale = 0.5 / valid as f64;
            for layer in [num_layers, num_layers - 1] {
                for pos in 0..valid {
                    for (g, p) in dhidden[layer][pos * d..(pos + 1) * d].iter_mut().zip(&dpooled) {
                        *g += p * scale;
                    }
                }
            }
        }
    }

    for l in (0..num_layers).rev() {
        let dout = std::mem::take(&mut dhidden[l + 1]);
        let dx = layer_backward(
            &dout,
            trace.hidden.layer(l),
            &trace.layers[l],
            &weights.layers[l],
            &mut grads.layers[l],
            config,
            seq,
            valid,
        );
        add_assign(&mut dhidden[l], &dx);
    }

    let mut dx0 = std::mem::take(&mut dhidden[0]);
    apply_mask(&mut dx0, &trace.embed_mask);
    let demb = layer_norm_backward(
        &dx0,
        &trace.embed_norm,
        &weights.embed_norm_gamma.data,
        &mut grads.embed_norm_gamma.data,
        &mut grads.embed_norm_beta.data,
    );
    for (t, &id) in trace.ids.iter().enumerate() {
        let g = &demb[t * d..(t + 1) * d];
        add_assign(&mut grads.token_embedding.data[id as usize * d..(id as usize + 1) * d], g);
        add_assign(&mut grads.position_embedding.data[t * d..(t + 1) * d], g);
    }
}
