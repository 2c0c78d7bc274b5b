//! Forward and backward passes of the encoder-decoder network.
//!
//! Pre-norm transformer blocks with RMSNorm, GELU feedforwards, sinusoidal
//! positional encodings, and untied input embedding / output projection.
//! Everything runs in f64 on one sequence at a time; batching accumulates
//! gradients across examples. The backward pass is written out by hand and
//! validated against central finite differences.

use super::tensor::{axpy, dot, softmax_inplace, Mat};
use super::{AttentionWeights, ModelParameters};
use crate::preprocess::PAD_ID;

const MASKED_SCORE: f64 = -1e30;
const RMS_EPS: f64 = 1e-6;

pub(super) fn positional_encoding(len: usize, d_model: usize) -> Mat {
    Mat::from_fn(len, d_model, |pos, j| {
        let pair = (j / 2) as f64;
        let angle = pos as f64 / 10_000f64.powf(2.0 * pair / d_model as f64);
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

pub(super) fn pad_mask(ids: &[u32]) -> Vec<bool> {
    ids.iter().map(|&id| id == PAD_ID).collect()
}

// ---------------------------------------------------------------- embedding

pub(super) fn embed(params: &ModelParameters, ids: &[u32]) -> Mat {
    let d = params.config.d_model;
    let scale = (d as f64).sqrt();
    let pe = positional_encoding(ids.len(), d);
    let mut x = Mat::zeros(ids.len(), d);
    for (i, &id) in ids.iter().enumerate() {
        let emb = params.tok_emb.row(id as usize);
        let pe_row = pe.row(i);
        let out = x.row_mut(i);
        for j in 0..d {
            out[j] = emb[j] * scale + pe_row[j];
        }
    }
    x
}

fn embed_backward(grads: &mut ModelParameters, ids: &[u32], d_x: &Mat) {
    let scale = (grads.config.d_model as f64).sqrt();
    for (i, &id) in ids.iter().enumerate() {
        axpy(scale, d_x.row(i), grads.tok_emb.row_mut(id as usize));
    }
}

// ------------------------------------------------------------------ rmsnorm

pub(super) struct NormCache {
    x: Mat,
    inv_rms: Vec<f64>,
}

fn rmsnorm_forward(gain: &[f64], x: &Mat) -> (Mat, NormCache) {
    let n = x.cols as f64;
    let mut out = Mat::zeros(x.rows, x.cols);
    let mut inv_rms = Vec::with_capacity(x.rows);
    for i in 0..x.rows {
        let row = x.row(i);
        let ms = dot(row, row) / n;
        let r = 1.0 / (ms + RMS_EPS).sqrt();
        inv_rms.push(r);
        for (j, o) in out.row_mut(i).iter_mut().enumerate() {
            *o = gain[j] * row[j] * r;
        }
    }
    (
        out,
        NormCache {
            x: x.clone(),
            inv_rms,
        },
    )
}

fn rmsnorm_backward(
    gain: &[f64],
    cache: &NormCache,
    d_out: &Mat,
    d_gain: &mut [f64],
    d_x: &mut Mat,
) {
    let n = cache.x.cols as f64;
    for i in 0..cache.x.rows {
        let x = cache.x.row(i);
        let dy = d_out.row(i);
        let r = cache.inv_rms[i];
        let mut inner = 0.0; // sum_j dy_j g_j x_j
        for j in 0..x.len() {
            d_gain[j] += dy[j] * x[j] * r;
            inner += dy[j] * gain[j] * x[j];
        }
        let coef = r * r * r / n * inner;
        let dx = d_x.row_mut(i);
        for j in 0..x.len() {
            dx[j] += gain[j] * dy[j] * r - coef * x[j];
        }
    }
}

// --------------------------------------------------------------------- gelu

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797884560802865; // sqrt(2/pi)
    const A: f64 = 0.044715;
    0.5 * x * (1.0 + (C * (x + A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797884560802865;
    const A: f64 = 0.044715;
    let u = C * (x + A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * A * x * x)
}

// ---------------------------------------------------------------- attention

pub(super) struct AttnCache {
    xq: Mat,
    xkv: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    /// per-head probability rows, masked entries exactly zero
    probs: Vec<Mat>,
    ctx: Mat,
}

fn attention_forward(
    weights: &AttentionWeights,
    n_heads: usize,
    xq: &Mat,
    xkv: &Mat,
    causal: bool,
    kv_pad: &[bool],
) -> (Mat, AttnCache) {
    let d = xq.cols;
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = xq.mul_transpose(&weights.wq);
    let k = xkv.mul_transpose(&weights.wk);
    let v = xkv.mul_transpose(&weights.wv);
    let (lq, lkv) = (xq.rows, xkv.rows);

    let mut probs = Vec::with_capacity(n_heads);
    let mut ctx = Mat::zeros(lq, d);
    for h in 0..n_heads {
        let off = h * dh;
        let mut p = Mat::zeros(lq, lkv);
        for i in 0..lq {
            let q_head = &q.row(i)[off..off + dh];
            let row = p.row_mut(i);
            for (j, slot) in row.iter_mut().enumerate() {
                if kv_pad[j] || (causal && j > i) {
                    *slot = MASKED_SCORE;
                } else {
                    *slot = dot(q_head, &k.row(j)[off..off + dh]) * scale;
                }
            }
            softmax_inplace(row);
            let ctx_head = &mut ctx.row_mut(i)[off..off + dh];
            for (j, &pij) in row.iter().enumerate() {
                if pij != 0.0 {
                    axpy(pij, &v.row(j)[off..off + dh], ctx_head);
                }
            }
        }
        probs.push(p);
    }
    let out = ctx.mul_transpose(&weights.wo);
    (
        out,
        AttnCache {
            xq: xq.clone(),
            xkv: xkv.clone(),
            q,
            k,
            v,
            probs,
            ctx,
        },
    )
}

/// Returns (d_xq, d_xkv); for self-attention the caller adds both into the
/// same upstream buffer.
fn attention_backward(
    weights: &AttentionWeights,
    n_heads: usize,
    cache: &AttnCache,
    d_out: &Mat,
    grads: &mut AttentionWeights,
) -> (Mat, Mat) {
    let d = cache.xq.cols;
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (lq, lkv) = (cache.xq.rows, cache.xkv.rows);

    grads.wo.add_assign(&d_out.transpose_mul(&cache.ctx));
    let d_ctx = d_out.mul(&weights.wo);

    let mut d_q = Mat::zeros(lq, d);
    let mut d_k = Mat::zeros(lkv, d);
    let mut d_v = Mat::zeros(lkv, d);
    for h in 0..n_heads {
        let off = h * dh;
        let p = &cache.probs[h];
        for i in 0..lq {
            let d_ctx_head = &d_ctx.row(i)[off..off + dh];
            let p_row = p.row(i);
            // d_probs and softmax backward fused per row
            let mut d_p = vec![0.0; lkv];
            let mut inner = 0.0; // sum_j p_j d_p_j
            for j in 0..lkv {
                if p_row[j] != 0.0 {
                    d_p[j] = dot(d_ctx_head, &cache.v.row(j)[off..off + dh]);
                    inner += p_row[j] * d_p[j];
                    axpy(p_row[j], d_ctx_head, &mut d_v.row_mut(j)[off..off + dh]);
                }
            }
            let q_head = &cache.q.row(i)[off..off + dh];
            let d_q_head_start = off;
            for j in 0..lkv {
                if p_row[j] == 0.0 {
                    continue;
                }
                let d_s = p_row[j] * (d_p[j] - inner) * scale;
                if d_s != 0.0 {
                    axpy(
                        d_s,
                        &cache.k.row(j)[off..off + dh],
                        &mut d_q.row_mut(i)[d_q_head_start..d_q_head_start + dh],
                    );
                    axpy(d_s, q_head, &mut d_k.row_mut(j)[off..off + dh]);
                }
            }
        }
    }

    grads.wq.add_assign(&d_q.transpose_mul(&cache.xq));
    grads.wk.add_assign(&d_k.transpose_mul(&cache.xkv));
    grads.wv.add_assign(&d_v.transpose_mul(&cache.xkv));
    let d_xq = d_q.mul(&weights.wq);
    let mut d_xkv = d_k.mul(&weights.wk);
    d_xkv.add_assign(&d_v.mul(&weights.wv));
    (d_xq, d_xkv)
}

// -------------------------------------------------------------- feedforward

pub(super) struct FfnCache {
    x: Mat,
    pre: Mat,
    act: Mat,
}

fn ffn_forward(w1: &Mat, w2: &Mat, x: &Mat) -> (Mat, FfnCache) {
    let pre = x.mul_transpose(w1);
    let mut act = pre.clone();
    for v in &mut act.data {
        *v = gelu(*v);
    }
    let out = act.mul_transpose(w2);
    (
        out,
        FfnCache {
            x: x.clone(),
            pre,
            act,
        },
    )
}

fn ffn_backward(
    w1: &Mat,
    w2: &Mat,
    cache: &FfnCache,
    d_out: &Mat,
    d_w1: &mut Mat,
    d_w2: &mut Mat,
    d_x: &mut Mat,
) {
    d_w2.add_assign(&d_out.transpose_mul(&cache.act));
    let mut d_act = d_out.mul(w2);
    for (g, &pre) in d_act.data.iter_mut().zip(&cache.pre.data) {
        *g *= gelu_grad(pre);
    }
    d_w1.add_assign(&d_act.transpose_mul(&cache.x));
    d_x.add_assign(&d_act.mul(w1));
}

// ------------------------------------------------------------- encoder pass

pub(super) struct EncLayerCache {
    norm1: NormCache,
    attn: AttnCache,
    norm2: NormCache,
    ffn: FfnCache,
}

pub(super) struct EncCache {
    pub ids: Vec<u32>,
    pub pad: Vec<bool>,
    layers: Vec<EncLayerCache>,
    final_norm: NormCache,
    pub z: Mat,
}

pub(super) fn encoder_forward(params: &ModelParameters, ids: &[u32]) -> EncCache {
    let pad = pad_mask(ids);
    let mut x = embed(params, ids);
    let n_heads = params.config.n_heads;
    let mut layers = Vec::with_capacity(params.enc_layers.len());
    for layer in &params.enc_layers {
        let (normed, norm1) = rmsnorm_forward(&layer.norm1, &x);
        let (attn_out, attn) =
            attention_forward(&layer.attn, n_heads, &normed, &normed, false, &pad);
        x.add_assign(&attn_out);
        let (normed2, norm2) = rmsnorm_forward(&layer.norm2, &x);
        let (ffn_out, ffn) = ffn_forward(&layer.ffn_w1, &layer.ffn_w2, &normed2);
        x.add_assign(&ffn_out);
        layers.push(EncLayerCache {
            norm1,
            attn,
            norm2,
            ffn,
        });
    }
    let (z, final_norm) = rmsnorm_forward(&params.enc_norm, &x);
    EncCache {
        ids: ids.to_vec(),
        pad,
        layers,
        final_norm,
        z,
    }
}

fn encoder_backward(
    params: &ModelParameters,
    cache: &EncCache,
    d_z: &Mat,
    grads: &mut ModelParameters,
) {
    let n_heads = params.config.n_heads;
    let mut d_x = Mat::zeros(d_z.rows, d_z.cols);
    rmsnorm_backward(
        &params.enc_norm,
        &cache.final_norm,
        d_z,
        &mut grads.enc_norm,
        &mut d_x,
    );
    for idx in (0..params.enc_layers.len()).rev() {
        let layer = &params.enc_layers[idx];
        let lc = &cache.layers[idx];
        let gl = &mut grads.enc_layers[idx];

        // x2 = x1 + ffn(rms2(x1))
        let mut d_norm2_out = Mat::zeros(d_x.rows, d_x.cols);
        ffn_backward(
            &layer.ffn_w1,
            &layer.ffn_w2,
            &lc.ffn,
            &d_x,
            &mut gl.ffn_w1,
            &mut gl.ffn_w2,
            &mut d_norm2_out,
        );
        rmsnorm_backward(&layer.norm2, &lc.norm2, &d_norm2_out, &mut gl.norm2, &mut d_x);

        // x1 = x0 + attn(rms1(x0)); q and kv share the normed input
        let (d_q_side, d_kv_side) =
            attention_backward(&layer.attn, n_heads, &lc.attn, &d_x, &mut gl.attn);
        let mut d_normed = d_q_side;
        d_normed.add_assign(&d_kv_side);
        rmsnorm_backward(&layer.norm1, &lc.norm1, &d_normed, &mut gl.norm1, &mut d_x);
    }
    embed_backward(grads, &cache.ids, &d_x);
}

// ------------------------------------------------------------- decoder pass

pub(super) struct DecLayerCache {
    norm1: NormCache,
    self_attn: AttnCache,
    norm2: NormCache,
    cross_attn: AttnCache,
    norm3: NormCache,
    ffn: FfnCache,
}

pub(super) struct DecCache {
    pub ids: Vec<u32>,
    layers: Vec<DecLayerCache>,
    final_norm: NormCache,
    pub out: Mat,
}

/// Run the decoder stack over `ids` attending to encoder states `z`.
pub(super) fn decoder_forward(
    params: &ModelParameters,
    ids: &[u32],
    z: &Mat,
    z_pad: &[bool],
) -> DecCache {
    let self_pad = pad_mask(ids);
    let mut x = embed(params, ids);
    let n_heads = params.config.n_heads;
    let mut layers = Vec::with_capacity(params.dec_layers.len());
    for layer in &params.dec_layers {
        let (normed1, norm1) = rmsnorm_forward(&layer.norm1, &x);
        let (self_out, self_attn) =
            attention_forward(&layer.self_attn, n_heads, &normed1, &normed1, true, &self_pad);
        x.add_assign(&self_out);
        let (normed2, norm2) = rmsnorm_forward(&layer.norm2, &x);
        let (cross_out, cross_attn) =
            attention_forward(&layer.cross_attn, n_heads, &normed2, z, false, z_pad);
        x.add_assign(&cross_out);
        let (normed3, norm3) = rmsnorm_forward(&layer.norm3, &x);
        let (ffn_out, ffn) = ffn_forward(&layer.ffn_w1, &layer.ffn_w2, &normed3);
        x.add_assign(&ffn_out);
        layers.push(DecLayerCache {
            norm1,
            self_attn,
            norm2,
            cross_attn,
            norm3,
            ffn,
        });
    }
    let (out, final_norm) = rmsnorm_forward(&params.dec_norm, &x);
    DecCache {
        ids: ids.to_vec(),
        layers,
        final_norm,
        out,
    }
}

/// Backward through the decoder; returns the gradient w.r.t. the encoder
/// states for the encoder backward pass.
fn decoder_backward(
    params: &ModelParameters,
    cache: &DecCache,
    d_out: &Mat,
    z_rows: usize,
    grads: &mut ModelParameters,
) -> Mat {
    let n_heads = params.config.n_heads;
    let mut d_x = Mat::zeros(d_out.rows, d_out.cols);
    let mut d_z = Mat::zeros(z_rows, d_out.cols);
    rmsnorm_backward(
        &params.dec_norm,
        &cache.final_norm,
        d_out,
        &mut grads.dec_norm,
        &mut d_x,
    );
    for idx in (0..params.dec_layers.len()).rev() {
        let layer = &params.dec_layers[idx];
        let lc = &cache.layers[idx];
        let gl = &mut grads.dec_layers[idx];

        let mut d_norm3_out = Mat::zeros(d_x.rows, d_x.cols);
        ffn_backward(
            &layer.ffn_w1,
            &layer.ffn_w2,
            &lc.ffn,
            &d_x,
            &mut gl.ffn_w1,
            &mut gl.ffn_w2,
            &mut d_norm3_out,
        );
        rmsnorm_backward(&layer.norm3, &lc.norm3, &d_norm3_out, &mut gl.norm3, &mut d_x);

        let (d_q_side, d_kv_side) =
            attention_backward(&layer.cross_attn, n_heads, &lc.cross_attn, &d_x, &mut gl.cross_attn);
        d_z.add_assign(&d_kv_side);
        rmsnorm_backward(&layer.norm2, &lc.norm2, &d_q_side, &mut gl.norm2, &mut d_x);

        let (d_q_self, d_kv_self) =
            attention_backward(&layer.self_attn, n_heads, &lc.self_attn, &d_x, &mut gl.self_attn);
        let mut d_normed1 = d_q_self;
        d_normed1.add_assign(&d_kv_self);
        rmsnorm_backward(&layer.norm1, &lc.norm1, &d_normed1, &mut gl.norm1, &mut d_x);
    }
    embed_backward(grads, &cache.ids, &d_x);
    d_z
}

// --------------------------------------------------------------------- loss

/// Output distribution over the vocabulary at each decoder position.
pub(super) fn output_probs(params: &ModelParameters, dec_out: &Mat) -> Mat {
    let mut logits = dec_out.mul_transpose(&params.w_out);
    for i in 0..logits.rows {
        softmax_inplace(logits.row_mut(i));
    }
    logits
}

pub(super) struct ExampleCache {
    pub enc: EncCache,
    pub dec: DecCache,
    pub probs: Mat,
    pub targets: Vec<u32>,
}

/// Teacher-forced forward pass for one (input, target) pair. The decoder
/// input is BOS followed by the target without its last token; the loss
/// compares position outputs against the target itself. PAD targets are
/// ignored.
pub(super) fn forward_example(
    params: &ModelParameters,
    input_ids: &[u32],
    target_ids: &[u32],
    bos: u32,
) -> (f64, usize, ExampleCache) {
    let enc = encoder_forward(params, input_ids);
    let mut dec_input = Vec::with_capacity(target_ids.len());
    dec_input.push(bos);
    dec_input.extend_from_slice(&target_ids[..target_ids.len() - 1]);
    let dec = decoder_forward(params, &dec_input, &enc.z, &enc.pad);
    let probs = output_probs(params, &dec.out);
    let mut nll = 0.0;
    let mut tokens = 0usize;
    for (i, &t) in target_ids.iter().enumerate() {
        if t == PAD_ID {
            continue;
        }
        nll += -probs.row(i)[t as usize].max(1e-300).ln();
        tokens += 1;
    }
    (
        nll,
        tokens,
        ExampleCache {
            enc,
            dec,
            probs,
            targets: target_ids.to_vec(),
        },
    )
}

/// Accumulate gradients of `weight * sum_t nll_t` for one example.
pub(super) fn backward_example(
    params: &ModelParameters,
    cache: &ExampleCache,
    weight: f64,
    grads: &mut ModelParameters,
) {
    let vocab = params.config.vocab_size;
    let mut d_logits = Mat::zeros(cache.probs.rows, vocab);
    for (i, &t) in cache.targets.iter().enumerate() {
        if t == PAD_ID {
            continue;
        }
        let p = cache.probs.row(i);
        let dl = d_logits.row_mut(i);
        for j in 0..vocab {
            dl[j] = weight * p[j];
        }
        dl[t as usize] -= weight;
    }
    grads
        .w_out
        .add_assign(&d_logits.transpose_mul(&cache.dec.out));
    let d_dec_out = d_logits.mul(&params.w_out);
    let d_z = decoder_backward(params, &cache.dec, &d_dec_out, cache.enc.z.rows, grads);
    encoder_backward(params, &cache.enc, &d_z, grads);
}
