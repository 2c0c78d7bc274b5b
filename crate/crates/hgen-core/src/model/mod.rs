//! Desk-scale encoder-decoder transformer trained from scratch.
//!
//! The encoder maps a fused input sequence to hidden states; the decoder
//! predicts headline tokens autoregressively, conditioned on those states via
//! cross-attention and on its own prefix via causally masked self-attention.
//! Training is plain SGD over teacher-forced token cross-entropy, fully
//! deterministic given the seeds.

mod net;
mod tensor;

pub use tensor::Mat;

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::FusionInput;
use crate::preprocess::{TokenSequence, BOS_ID, EOS_ID, RESERVED_LEN};
use crate::rng::Rng;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("sequence length {len} exceeds the maximum of {max} positions")]
    Length { len: usize, max: usize },
    #[error("token id {id} is outside the vocabulary of size {size}")]
    IdOutOfRange { id: u32, size: usize },
    #[error("training requires a non-empty pair list")]
    EmptyBatch,
    #[error("invalid training pair at index {index}: {reason}")]
    BadPair { index: usize, reason: String },
    #[error("loss became non-finite at step {step}")]
    Divergence { step: usize },
    #[error("encoder states are empty")]
    EmptyState,
    #[error("{0}")]
    BadParameter(String),
    #[error("checkpoint is malformed: {0}")]
    Checkpoint(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Architecture shape. `d_model` must divide evenly into `n_heads`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_encoder_layers: usize,
    pub n_decoder_layers: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            n_heads: 4,
            n_encoder_layers: 2,
            n_decoder_layers: 2,
            d_ff: 128,
            vocab_size: 4096,
            max_positions: 512,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d_model == 0
            || self.n_heads == 0
            || self.n_encoder_layers == 0
            || self.n_decoder_layers == 0
            || self.d_ff == 0
            || self.max_positions == 0
        {
            return Err(ModelError::Config(
                "all size fields must be at least 1".into(),
            ));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(ModelError::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.vocab_size <= RESERVED_LEN {
            return Err(ModelError::Config(format!(
                "vocab_size {} must exceed the {RESERVED_LEN} reserved tokens",
                self.vocab_size
            )));
        }
        Ok(())
    }
}

/// Optimization settings for `train`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub input_token_length: usize,
    pub target_token_length: usize,
    pub seed: u64,
    /// Global-norm gradient clipping threshold; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 1e-4,
            epochs: 5,
            batch_size: 8,
            input_token_length: 512,
            target_token_length: 64,
            seed: 0,
            grad_clip: Some(1.0),
        }
    }
}

impl TrainingConfig {
    /// Whether every value lies in the default hyperparameter search space.
    pub fn in_search_space(&self) -> bool {
        [2e-5, 1e-4, 1e-3].contains(&self.learning_rate)
            && (3..=10).contains(&self.epochs)
            && [4, 8].contains(&self.batch_size)
            && [512, 1024].contains(&self.input_token_length)
            && [16, 32, 64, 128].contains(&self.target_token_length)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeStrategy {
    Greedy,
    Beam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub strategy: DecodeStrategy,
    pub beam_width: usize,
    pub max_target_length: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            strategy: DecodeStrategy::Greedy,
            beam_width: 4,
            max_target_length: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub wq: Mat,
    pub wk: Mat,
    pub wv: Mat,
    pub wo: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayerParams {
    pub norm1: Vec<f64>,
    pub attn: AttentionWeights,
    pub norm2: Vec<f64>,
    pub ffn_w1: Mat,
    pub ffn_w2: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayerParams {
    pub norm1: Vec<f64>,
    pub self_attn: AttentionWeights,
    pub norm2: Vec<f64>,
    pub cross_attn: AttentionWeights,
    pub norm3: Vec<f64>,
    pub ffn_w1: Mat,
    pub ffn_w2: Mat,
}

/// All learned weights. Tensor declaration order (embedding, encoder layers,
/// encoder norm, decoder layers, decoder norm, output projection) fixes the
/// checkpoint layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub config: ModelConfig,
    pub tok_emb: Mat,
    pub enc_layers: Vec<EncoderLayerParams>,
    pub enc_norm: Vec<f64>,
    pub dec_layers: Vec<DecoderLayerParams>,
    pub dec_norm: Vec<f64>,
    pub w_out: Mat,
}

fn glorot(rng: &mut Rng, rows: usize, cols: usize) -> Mat {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Mat::from_fn(rows, cols, |_, _| rng.uniform(-limit, limit))
}

fn attention_init(rng: &mut Rng, d: usize) -> AttentionWeights {
    AttentionWeights {
        wq: glorot(rng, d, d),
        wk: glorot(rng, d, d),
        wv: glorot(rng, d, d),
        wo: glorot(rng, d, d),
    }
}

/// Deterministic scaled-uniform initialization; equal configs give bitwise
/// equal parameters.
pub fn init_model(config: &ModelConfig) -> Result<ModelParameters, ModelError> {
    config.validate()?;
    let mut rng = Rng::new(config.seed ^ 0x6d6f64656c_u64);
    let d = config.d_model;
    let f = config.d_ff;
    let v = config.vocab_size;

    let tok_emb = glorot(&mut rng, v, d);
    let enc_layers = (0..config.n_encoder_layers)
        .map(|_| EncoderLayerParams {
            norm1: vec![1.0; d],
            attn: attention_init(&mut rng, d),
            norm2: vec![1.0; d],
            ffn_w1: glorot(&mut rng, f, d),
            ffn_w2: glorot(&mut rng, d, f),
        })
        .collect();
    let dec_layers = (0..config.n_decoder_layers)
        .map(|_| DecoderLayerParams {
            norm1: vec![1.0; d],
            self_attn: attention_init(&mut rng, d),
            norm2: vec![1.0; d],
            cross_attn: attention_init(&mut rng, d),
            norm3: vec![1.0; d],
            ffn_w1: glorot(&mut rng, f, d),
            ffn_w2: glorot(&mut rng, d, f),
        })
        .collect();
    Ok(ModelParameters {
        config: *config,
        tok_emb,
        enc_layers,
        enc_norm: vec![1.0; d],
        dec_layers,
        dec_norm: vec![1.0; d],
        w_out: glorot(&mut rng, v, d),
    })
}

impl ModelParameters {
    pub fn zeros_like(&self) -> ModelParameters {
        let mut copy = self.clone();
        copy.for_each_tensor_mut(|_, data| data.iter_mut().for_each(|x| *x = 0.0));
        copy
    }

    pub fn for_each_tensor(&self, mut f: impl FnMut(&str, &[f64])) {
        f("tok_emb", &self.tok_emb.data);
        for (i, l) in self.enc_layers.iter().enumerate() {
            f(&format!("enc.{i}.norm1"), &l.norm1);
            f(&format!("enc.{i}.attn.wq"), &l.attn.wq.data);
            f(&format!("enc.{i}.attn.wk"), &l.attn.wk.data);
            f(&format!("enc.{i}.attn.wv"), &l.attn.wv.data);
            f(&format!("enc.{i}.attn.wo"), &l.attn.wo.data);
            f(&format!("enc.{i}.norm2"), &l.norm2);
            f(&format!("enc.{i}.ffn_w1"), &l.ffn_w1.data);
            f(&format!("enc.{i}.ffn_w2"), &l.ffn_w2.data);
        }
        f("enc_norm", &self.enc_norm);
        for (i, l) in self.dec_layers.iter().enumerate() {
            f(&format!("dec.{i}.norm1"), &l.norm1);
            f(&format!("dec.{i}.self.wq"), &l.self_attn.wq.data);
            f(&format!("dec.{i}.self.wk"), &l.self_attn.wk.data);
            f(&format!("dec.{i}.self.wv"), &l.self_attn.wv.data);
            f(&format!("dec.{i}.self.wo"), &l.self_attn.wo.data);
            f(&format!("dec.{i}.norm2"), &l.norm2);
            f(&format!("dec.{i}.cross.wq"), &l.cross_attn.wq.data);
            f(&format!("dec.{i}.cross.wk"), &l.cross_attn.wk.data);
            f(&format!("dec.{i}.cross.wv"), &l.cross_attn.wv.data);
            f(&format!("dec.{i}.cross.wo"), &l.cross_attn.wo.data);
            f(&format!("dec.{i}.norm3"), &l.norm3);
            f(&format!("dec.{i}.ffn_w1"), &l.ffn_w1.data);
            f(&format!("dec.{i}.ffn_w2"), &l.ffn_w2.data);
        }
        f("dec_norm", &self.dec_norm);
        f("w_out", &self.w_out.data);
    }

    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(&str, &mut [f64])) {
        f("tok_emb", &mut self.tok_emb.data);
        for (i, l) in self.enc_layers.iter_mut().enumerate() {
            f(&format!("enc.{i}.norm1"), &mut l.norm1);
            f(&format!("enc.{i}.attn.wq"), &mut l.attn.wq.data);
            f(&format!("enc.{i}.attn.wk"), &mut l.attn.wk.data);
            f(&format!("enc.{i}.attn.wv"), &mut l.attn.wv.data);
            f(&format!("enc.{i}.attn.wo"), &mut l.attn.wo.data);
            f(&format!("enc.{i}.norm2"), &mut l.norm2);
            f(&format!("enc.{i}.ffn_w1"), &mut l.ffn_w1.data);
            f(&format!("enc.{i}.ffn_w2"), &mut l.ffn_w2.data);
        }
        f("enc_norm", &mut self.enc_norm);
        for (i, l) in self.dec_layers.iter_mut().enumerate() {
            f(&format!("dec.{i}.norm1"), &mut l.norm1);
            f(&format!("dec.{i}.self.wq"), &mut l.self_attn.wq.data);
            f(&format!("dec.{i}.self.wk"), &mut l.self_attn.wk.data);
            f(&format!("dec.{i}.self.wv"), &mut l.self_attn.wv.data);
            f(&format!("dec.{i}.self.wo"), &mut l.self_attn.wo.data);
            f(&format!("dec.{i}.norm2"), &mut l.norm2);
            f(&format!("dec.{i}.cross.wq"), &mut l.cross_attn.wq.data);
            f(&format!("dec.{i}.cross.wk"), &mut l.cross_attn.wk.data);
            f(&format!("dec.{i}.cross.wv"), &mut l.cross_attn.wv.data);
            f(&format!("dec.{i}.cross.wo"), &mut l.cross_attn.wo.data);
            f(&format!("dec.{i}.norm3"), &mut l.norm3);
            f(&format!("dec.{i}.ffn_w1"), &mut l.ffn_w1.data);
            f(&format!("dec.{i}.ffn_w2"), &mut l.ffn_w2.data);
        }
        f("dec_norm", &mut self.dec_norm);
        f("w_out", &mut self.w_out.data);
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        self.for_each_tensor(|_, data| ok &= data.iter().all(|x| x.is_finite()));
        ok
    }

    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.for_each_tensor(|_, data| n += data.len());
        n
    }

    fn global_norm(&self) -> f64 {
        let mut sum = 0.0;
        self.for_each_tensor(|_, data| sum += data.iter().map(|x| x * x).sum::<f64>());
        sum.sqrt()
    }

    /// SGD step: w -= lr * g, after optional global-norm clipping of g.
    fn apply_gradients(&mut self, grads: &ModelParameters, lr: f64, clip: Option<f64>) {
        let mut scale = lr;
        if let Some(c) = clip {
            let norm = grads.global_norm();
            if norm > c {
                scale = lr * c / norm;
            }
        }
        let mut flat: Vec<f64> = Vec::with_capacity(self.parameter_count());
        grads.for_each_tensor(|_, data| flat.extend_from_slice(data));
        let mut offset = 0;
        self.for_each_tensor_mut(|_, data| {
            let len = data.len();
            for (w, g) in data.iter_mut().zip(&flat[offset..offset + len]) {
                *w -= scale * g;
            }
            offset += len;
        });
    }
}

/// Encoder output: one `d_model` row per input position, plus the key
/// padding mask decoding must respect.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub states: Mat,
    pub key_padding: Vec<bool>,
}

fn check_ids(params: &ModelParameters, ids: &[u32]) -> Result<(), ModelError> {
    for &id in ids {
        if id as usize >= params.config.vocab_size {
            return Err(ModelError::IdOutOfRange {
                id,
                size: params.config.vocab_size,
            });
        }
    }
    Ok(())
}

/// Map an input sequence to hidden states (one row per position).
pub fn encode(params: &ModelParameters, input: &FusionInput) -> Result<Encoded, ModelError> {
    encode_ids(params, &input.ids.ids)
}

pub fn encode_ids(params: &ModelParameters, ids: &[u32]) -> Result<Encoded, ModelError> {
    if ids.is_empty() {
        return Err(ModelError::EmptyState);
    }
    if ids.len() > params.config.max_positions {
        return Err(ModelError::Length {
            len: ids.len(),
            max: params.config.max_positions,
        });
    }
    check_ids(params, ids)?;
    let cache = net::encoder_forward(params, ids);
    Ok(Encoded {
        states: cache.z,
        key_padding: cache.pad,
    })
}

/// Next-token distribution after the given decoder prefix (which must start
/// with BOS). Nonnegative and sums to 1.
pub fn decode_step(
    params: &ModelParameters,
    encoded: &Encoded,
    prefix: &TokenSequence,
) -> Result<Vec<f64>, ModelError> {
    if encoded.states.rows == 0 {
        return Err(ModelError::EmptyState);
    }
    if prefix.is_empty() {
        return Err(ModelError::BadParameter(
            "decoder prefix must contain at least BOS".into(),
        ));
    }
    if prefix.len() >= params.config.max_positions {
        return Err(ModelError::Length {
            len: prefix.len(),
            max: params.config.max_positions,
        });
    }
    check_ids(params, &prefix.ids)?;
    let cache = net::decoder_forward(params, &prefix.ids, &encoded.states, &encoded.key_padding);
    let probs = net::output_probs(params, &cache.out);
    Ok(probs.row(probs.rows - 1).to_vec())
}

/// Per-epoch mean token cross-entropy returned by `train`.
pub type LossTrajectory = Vec<f64>;

/// Teacher-forced SGD training. Pairs are (input, target); targets must end
/// with EOS and fit `target_token_length`. Returns the per-epoch mean loss.
pub fn train(
    params: &mut ModelParameters,
    pairs: &[(FusionInput, TokenSequence)],
    tconfig: &TrainingConfig,
) -> Result<LossTrajectory, ModelError> {
    if pairs.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    for (index, (input, target)) in pairs.iter().enumerate() {
        let fail = |reason: &str| ModelError::BadPair {
            index,
            reason: reason.to_string(),
        };
        if input.ids.is_empty() {
            return Err(fail("input is empty"));
        }
        if input.ids.len() > tconfig.input_token_length
            || input.ids.len() > params.config.max_positions
        {
            return Err(fail("input exceeds the configured token length"));
        }
        if target.is_empty() {
            return Err(fail("target is empty"));
        }
        if target.len() > tconfig.target_token_length
            || target.len() > params.config.max_positions
        {
            return Err(fail("target exceeds the configured token length"));
        }
        if *target.ids.last().unwrap() != EOS_ID {
            return Err(fail("target does not end with EOS"));
        }
        check_ids(params, &input.ids.ids)?;
        check_ids(params, &target.ids)?;
    }

    let mut rng = Rng::new(tconfig.seed ^ 0x747261696e_u64);
    let mut trajectory = Vec::with_capacity(tconfig.epochs);
    let mut step = 0usize;
    for _epoch in 0..tconfig.epochs {
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        rng.shuffle(&mut order);
        let mut epoch_nll = 0.0;
        let mut epoch_tokens = 0usize;
        for chunk in order.chunks(tconfig.batch_size.max(1)) {
            step += 1;
            let mut caches = Vec::with_capacity(chunk.len());
            let mut batch_nll = 0.0;
            let mut batch_tokens = 0usize;
            for &i in chunk {
                let (input, target) = &pairs[i];
                let (nll, tokens, cache) =
                    net::forward_example(params, &input.ids.ids, &target.ids, BOS_ID);
                batch_nll += nll;
                batch_tokens += tokens;
                caches.push(cache);
            }
            if batch_tokens == 0 {
                continue;
            }
            let batch_loss = batch_nll / batch_tokens as f64;
            if !batch_loss.is_finite() {
                return Err(ModelError::Divergence { step });
            }
            epoch_nll += batch_nll;
            epoch_tokens += batch_tokens;
            let mut grads = params.zeros_like();
            let weight = 1.0 / batch_tokens as f64;
            for cache in &caches {
                net::backward_example(params, cache, weight, &mut grads);
            }
            params.apply_gradients(&grads, tconfig.learning_rate, tconfig.grad_clip);
            if !params.all_finite() {
                return Err(ModelError::Divergence { step });
            }
        }
        trajectory.push(epoch_nll / epoch_tokens.max(1) as f64);
    }
    Ok(trajectory)
}

/// Mean token cross-entropy over a batch, without updating anything.
pub fn batch_loss(
    params: &ModelParameters,
    pairs: &[(FusionInput, TokenSequence)],
) -> Result<f64, ModelError> {
    if pairs.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let mut nll = 0.0;
    let mut tokens = 0usize;
    for (input, target) in pairs {
        let (n, t, _) = net::forward_example(params, &input.ids.ids, &target.ids, BOS_ID);
        nll += n;
        tokens += t;
    }
    Ok(nll / tokens.max(1) as f64)
}

/// Autoregressive generation from BOS until EOS or `max_target_length`.
/// Greedy takes the argmax each step (ties resolve to the lowest id); beam
/// search keeps `beam_width` prefixes by total log-probability.
pub fn generate(
    params: &ModelParameters,
    input: &FusionInput,
    dconfig: &DecodeConfig,
) -> Result<TokenSequence, ModelError> {
    if dconfig.beam_width < 1 {
        return Err(ModelError::Config("beam width must be at least 1".into()));
    }
    if dconfig.max_target_length < 1 {
        return Err(ModelError::Config(
            "maximum target length must be at least 1".into(),
        ));
    }
    let encoded = encode(params, input)?;
    match dconfig.strategy {
        DecodeStrategy::Greedy => greedy_decode(params, &encoded, dconfig.max_target_length),
        DecodeStrategy::Beam => beam_decode(
            params,
            &encoded,
            dconfig.beam_width,
            dconfig.max_target_length,
        ),
    }
}

fn greedy_decode(
    params: &ModelParameters,
    encoded: &Encoded,
    max_len: usize,
) -> Result<TokenSequence, ModelError> {
    let mut prefix = TokenSequence::new(vec![BOS_ID]);
    let mut out = Vec::new();
    while out.len() < max_len && prefix.len() < params.config.max_positions {
        let dist = decode_step(params, encoded, &prefix)?;
        let next = argmax(&dist) as u32;
        out.push(next);
        if next == EOS_ID {
            break;
        }
        prefix.ids.push(next);
    }
    Ok(TokenSequence::new(out))
}

fn argmax(dist: &[f64]) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &v) in dist.iter().enumerate() {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

struct Beam {
    tokens: Vec<u32>,
    log_prob: f64,
    finished: bool,
}

fn beam_decode(
    params: &ModelParameters,
    encoded: &Encoded,
    width: usize,
    max_len: usize,
) -> Result<TokenSequence, ModelError> {
    let mut beams = vec![Beam {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
    }];
    for _ in 0..max_len {
        if beams.iter().all(|b| b.finished) {
            break;
        }
        let mut candidates: Vec<Beam> = Vec::new();
        for beam in &beams {
            if beam.finished {
                candidates.push(Beam {
                    tokens: beam.tokens.clone(),
                    log_prob: beam.log_prob,
                    finished: true,
                });
                continue;
            }
            let mut prefix = Vec::with_capacity(beam.tokens.len() + 1);
            prefix.push(BOS_ID);
            prefix.extend_from_slice(&beam.tokens);
            if prefix.len() >= params.config.max_positions {
                candidates.push(Beam {
                    tokens: beam.tokens.clone(),
                    log_prob: beam.log_prob,
                    finished: true,
                });
                continue;
            }
            let dist = decode_step(params, encoded, &TokenSequence::new(prefix))?;
            for (id, &p) in dist.iter().enumerate() {
                let mut tokens = beam.tokens.clone();
                tokens.push(id as u32);
                candidates.push(Beam {
                    tokens,
                    log_prob: beam.log_prob + p.max(1e-300).ln(),
                    finished: id as u32 == EOS_ID,
                });
            }
        }
        candidates.sort_by(|a, b| {
            b.log_prob
                .partial_cmp(&a.log_prob)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.tokens.cmp(&b.tokens))
        });
        candidates.truncate(width);
        beams = candidates;
    }
    let best = beams
        .into_iter()
        .max_by(|a, b| {
            a.log_prob
                .partial_cmp(&b.log_prob)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| b.tokens.cmp(&a.tokens))
        })
        .expect("at least one beam");
    Ok(TokenSequence::new(best.tokens))
}

/// Compare analytic gradients of the batch-mean loss against central finite
/// differences on an evenly spaced sample of weights; returns the maximum
/// relative error. Entries where both gradients sit below the
/// finite-difference resolution report zero error.
pub fn gradient_check(
    params: &ModelParameters,
    batch: &[(FusionInput, TokenSequence)],
    epsilon: f64,
) -> Result<f64, ModelError> {
    if epsilon <= 0.0 {
        return Err(ModelError::BadParameter(
            "epsilon must be strictly positive".into(),
        ));
    }
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    const SAMPLES_PER_TENSOR: usize = 4;
    const RESOLUTION_FLOOR: f64 = 1e-7;

    let mut total_tokens = 0usize;
    let mut caches = Vec::with_capacity(batch.len());
    for (input, target) in batch {
        let (_, tokens, cache) = net::forward_example(params, &input.ids.ids, &target.ids, BOS_ID);
        total_tokens += tokens;
        caches.push(cache);
    }
    if total_tokens == 0 {
        return Err(ModelError::EmptyBatch);
    }
    let mut grads = params.zeros_like();
    let weight = 1.0 / total_tokens as f64;
    for cache in &caches {
        net::backward_example(params, cache, weight, &mut grads);
    }

    let mut samples: Vec<(usize, usize, f64)> = Vec::new(); // (tensor, element, analytic)
    {
        let mut tensor_idx = 0;
        grads.for_each_tensor(|_, data| {
            let stride = (data.len() / SAMPLES_PER_TENSOR).max(1);
            for k in 0..SAMPLES_PER_TENSOR {
                let j = k * stride;
                if j < data.len() {
                    samples.push((tensor_idx, j, data[j]));
                }
            }
            tensor_idx += 1;
        });
    }

    let mut probe = params.clone();
    let mut max_rel = 0.0f64;
    for &(tensor_idx, elem_idx, analytic) in &samples {
        let original = read_weight(&probe, tensor_idx, elem_idx);
        write_weight(&mut probe, tensor_idx, elem_idx, original + epsilon);
        let loss_plus = batch_loss(&probe, batch)?;
        write_weight(&mut probe, tensor_idx, elem_idx, original - epsilon);
        let loss_minus = batch_loss(&probe, batch)?;
        write_weight(&mut probe, tensor_idx, elem_idx, original);
        let numeric = (loss_plus - loss_minus) / (2.0 * epsilon);
        let denom = analytic.abs().max(numeric.abs());
        if denom < RESOLUTION_FLOOR {
            continue;
        }
        let rel = (analytic - numeric).abs() / denom;
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}

fn read_weight(params: &ModelParameters, tensor_idx: usize, elem_idx: usize) -> f64 {
    let mut value = 0.0;
    let mut idx = 0;
    params.for_each_tensor(|_, data| {
        if idx == tensor_idx {
            value = data[elem_idx];
        }
        idx += 1;
    });
    value
}

fn write_weight(params: &mut ModelParameters, tensor_idx: usize, elem_idx: usize, value: f64) {
    let mut idx = 0;
    params.for_each_tensor_mut(|_, data| {
        if idx == tensor_idx {
            data[elem_idx] = value;
        }
        idx += 1;
    });
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"HGENCKP1";
const CHECKPOINT_VERSION: u32 = 1;

/// Versioned binary checkpoint: magic, version, config block, then raw
/// little-endian f64 tensors in declaration order.
pub fn save_checkpoint(params: &ModelParameters, path: &Path) -> Result<(), ModelError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let c = params.config;
    for field in [
        c.d_model,
        c.n_heads,
        c.n_encoder_layers,
        c.n_decoder_layers,
        c.d_ff,
        c.vocab_size,
        c.max_positions,
    ] {
        w.write_all(&(field as u32).to_le_bytes())?;
    }
    w.write_all(&c.seed.to_le_bytes())?;
    let mut io_result: std::io::Result<()> = Ok(());
    params.for_each_tensor(|_, data| {
        if io_result.is_ok() {
            for x in data {
                if let Err(e) = w.write_all(&x.to_le_bytes()) {
                    io_result = Err(e);
                    break;
                }
            }
        }
    });
    io_result?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParameters, ModelError> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(ModelError::Checkpoint("bad magic string".into()));
    }
    let mut u32_buf = [0u8; 4];
    r.read_exact(&mut u32_buf)?;
    let version = u32::from_le_bytes(u32_buf);
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let mut fields = [0usize; 7];
    for field in &mut fields {
        r.read_exact(&mut u32_buf)?;
        *field = u32::from_le_bytes(u32_buf) as usize;
    }
    let mut u64_buf = [0u8; 8];
    r.read_exact(&mut u64_buf)?;
    let config = ModelConfig {
        d_model: fields[0],
        n_heads: fields[1],
        n_encoder_layers: fields[2],
        n_decoder_layers: fields[3],
        d_ff: fields[4],
        vocab_size: fields[5],
        max_positions: fields[6],
        seed: u64::from_le_bytes(u64_buf),
    };
    let mut params = init_model(&config)?;
    let mut read_err: Option<String> = None;
    params.for_each_tensor_mut(|name, data| {
        if read_err.is_some() {
            return;
        }
        let mut buf = [0u8; 8];
        for x in data.iter_mut() {
            match r.read_exact(&mut buf) {
                Ok(()) => *x = f64::from_le_bytes(buf),
                Err(e) => {
                    read_err = Some(format!("truncated while reading {name}: {e}"));
                    return;
                }
            }
        }
    });
    if let Some(message) = read_err {
        return Err(ModelError::Checkpoint(message));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(ModelError::Checkpoint("trailing bytes".into()));
    }
    if !params.all_finite() {
        return Err(ModelError::Checkpoint("non-finite weights".into()));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::SegmentSpans;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            d_model: 16,
            n_heads: 2,
            n_encoder_layers: 1,
            n_decoder_layers: 1,
            d_ff: 32,
            vocab_size: 32,
            max_positions: 64,
            seed: 42,
        }
    }

    fn input_of(ids: Vec<u32>) -> FusionInput {
        FusionInput {
            ids: TokenSequence::new(ids),
            spans: SegmentSpans::default(),
        }
    }

    fn tiny_batch() -> Vec<(FusionInput, TokenSequence)> {
        vec![
            (
                input_of(vec![6, 7, 8, 9]),
                TokenSequence::new(vec![10, 11, EOS_ID]),
            ),
            (
                input_of(vec![9, 8, 7]),
                TokenSequence::new(vec![12, EOS_ID]),
            ),
        ]
    }

    #[test]
    fn init_is_deterministic_and_finite() {
        let config = tiny_config();
        let a = init_model(&config).unwrap();
        let b = init_model(&config).unwrap();
        assert_eq!(a, b);
        assert!(a.all_finite());
        let c = init_model(&ModelConfig { seed: 43, ..config }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_head_split_is_rejected() {
        let config = ModelConfig {
            d_model: 10,
            n_heads: 3,
            ..tiny_config()
        };
        assert!(matches!(init_model(&config), Err(ModelError::Config(_))));
    }

    #[test]
    fn encode_shape_and_determinism() {
        let params = init_model(&tiny_config()).unwrap();
        let input = input_of(vec![6, 7, 8]);
        let a = encode(&params, &input).unwrap();
        let b = encode(&params, &input).unwrap();
        assert_eq!(a.states.rows, 3);
        assert_eq!(a.states.cols, 16);
        assert_eq!(a, b);
    }

    #[test]
    fn encode_rejects_overlong_and_empty() {
        let params = init_model(&tiny_config()).unwrap();
        let long = input_of((0..65).map(|i| 6 + (i % 4)).collect());
        assert!(matches!(
            encode(&params, &long),
            Err(ModelError::Length { len: 65, max: 64 })
        ));
        assert!(matches!(
            encode(&params, &input_of(vec![])),
            Err(ModelError::EmptyState)
        ));
    }

    #[test]
    fn differing_context_tokens_change_the_states() {
        let params = init_model(&tiny_config()).unwrap();
        let a = encode(&params, &input_of(vec![6, 7, 8, 20])).unwrap();
        let b = encode(&params, &input_of(vec![6, 7, 8, 21])).unwrap();
        let diff: f64 = a
            .states
            .data
            .iter()
            .zip(&b.states.data)
            .map(|(x, y)| (x - y).abs())
            .sum();
        assert!(diff > 1e-6, "conditioning is degenerate");
    }

    #[test]
    fn decode_step_distribution_sums_to_one() {
        let params = init_model(&tiny_config()).unwrap();
        let encoded = encode(&params, &input_of(vec![6, 7])).unwrap();
        let dist = decode_step(&params, &encoded, &TokenSequence::new(vec![BOS_ID, 10])).unwrap();
        assert_eq!(dist.len(), 32);
        assert!(dist.iter().all(|&p| p >= 0.0));
        assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn decode_step_is_causal() {
        let params = init_model(&tiny_config()).unwrap();
        let encoded = encode(&params, &input_of(vec![6, 7, 8])).unwrap();
        let short = TokenSequence::new(vec![BOS_ID, 10]);
        let dist_short = decode_step(&params, &encoded, &short).unwrap();
        // extending the prefix beyond position 1 must not change the
        // distribution computed after position 1
        let long_a = TokenSequence::new(vec![BOS_ID, 10, 11, 12]);
        let long_b = TokenSequence::new(vec![BOS_ID, 10, 20, 21]);
        let cache_a = net::decoder_forward(&params, &long_a.ids, &encoded.states, &encoded.key_padding);
        let cache_b = net::decoder_forward(&params, &long_b.ids, &encoded.states, &encoded.key_padding);
        let probs_a = net::output_probs(&params, &cache_a.out);
        let probs_b = net::output_probs(&params, &cache_b.out);
        for (j, &expected) in dist_short.iter().enumerate() {
            assert!((probs_a.row(1)[j] - probs_b.row(1)[j]).abs() < 1e-12);
            assert!((probs_a.row(1)[j] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn decode_step_rejects_empty_state() {
        let params = init_model(&tiny_config()).unwrap();
        let empty = Encoded {
            states: Mat::zeros(0, 16),
            key_padding: vec![],
        };
        assert!(matches!(
            decode_step(&params, &empty, &TokenSequence::new(vec![BOS_ID])),
            Err(ModelError::EmptyState)
        ));
    }

    #[test]
    fn padding_the_encoder_input_leaves_logits_unchanged() {
        use crate::preprocess::PAD_ID;
        let params = init_model(&tiny_config()).unwrap();
        let plain = encode(&params, &input_of(vec![6, 7, 8])).unwrap();
        let padded = encode(&params, &input_of(vec![6, 7, 8, PAD_ID, PAD_ID])).unwrap();
        let prefix = TokenSequence::new(vec![BOS_ID, 10, 11]);
        let a = decode_step(&params, &plain, &prefix).unwrap();
        let b = decode_step(&params, &padded, &prefix).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn train_overfits_a_small_batch() {
        let mut params = init_model(&tiny_config()).unwrap();
        let pairs: Vec<(FusionInput, TokenSequence)> = (0..8)
            .map(|i| {
                (
                    input_of(vec![6 + i, 7 + i, 8 + i]),
                    TokenSequence::new(vec![10 + i, 11 + i, EOS_ID]),
                )
            })
            .collect();
        let tconfig = TrainingConfig {
            learning_rate: 0.5,
            epochs: 60,
            batch_size: 8,
            input_token_length: 16,
            target_token_length: 8,
            seed: 1,
            grad_clip: Some(1.0),
        };
        let losses = train(&mut params, &pairs, &tconfig).unwrap();
        assert_eq!(losses.len(), 60);
        let first = losses[0];
        let last = *losses.last().unwrap();
        assert!(
            last < 0.1 * first,
            "did not overfit: first {first}, last {last}"
        );
    }

    #[test]
    fn train_is_deterministic() {
        let pairs = tiny_batch();
        let tconfig = TrainingConfig {
            learning_rate: 1e-3,
            epochs: 3,
            batch_size: 2,
            input_token_length: 16,
            target_token_length: 8,
            seed: 5,
            grad_clip: Some(1.0),
        };
        let mut a = init_model(&tiny_config()).unwrap();
        let la = train(&mut a, &pairs, &tconfig).unwrap();
        let mut b = init_model(&tiny_config()).unwrap();
        let lb = train(&mut b, &pairs, &tconfig).unwrap();
        assert_eq!(la, lb);
        assert_eq!(a, b);
    }

    #[test]
    fn train_rejects_bad_pairs() {
        let mut params = init_model(&tiny_config()).unwrap();
        assert!(matches!(
            train(&mut params, &[], &TrainingConfig::default()),
            Err(ModelError::EmptyBatch)
        ));
        let no_eos = vec![(input_of(vec![6]), TokenSequence::new(vec![10, 11]))];
        assert!(matches!(
            train(&mut params, &no_eos, &TrainingConfig::default()),
            Err(ModelError::BadPair { index: 0, .. })
        ));
    }

    #[test]
    fn overfit_single_pair_then_recall_it() {
        let mut params = init_model(&tiny_config()).unwrap();
        let pair = (
            input_of(vec![6, 7, 8, 9]),
            TokenSequence::new(vec![12, 13, 14, EOS_ID]),
        );
        let tconfig = TrainingConfig {
            learning_rate: 0.5,
            epochs: 80,
            batch_size: 1,
            input_token_length: 16,
            target_token_length: 8,
            seed: 2,
            grad_clip: Some(1.0),
        };
        train(&mut params, std::slice::from_ref(&pair), &tconfig).unwrap();
        let out = generate(&params, &pair.0, &DecodeConfig::default()).unwrap();
        assert_eq!(out, pair.1);
    }

    #[test]
    fn generate_respects_max_length_and_is_deterministic() {
        let params = init_model(&tiny_config()).unwrap();
        let input = input_of(vec![6, 7]);
        let dconfig = DecodeConfig {
            strategy: DecodeStrategy::Greedy,
            beam_width: 1,
            max_target_length: 5,
        };
        let a = generate(&params, &input, &dconfig).unwrap();
        let b = generate(&params, &input, &dconfig).unwrap();
        assert!(a.len() <= 5);
        assert_eq!(a, b);
    }

    #[test]
    fn beam_width_one_matches_greedy_when_probabilities_are_peaked() {
        let mut params = init_model(&tiny_config()).unwrap();
        let pair = (
            input_of(vec![6, 7, 8]),
            TokenSequence::new(vec![10, 11, EOS_ID]),
        );
        let tconfig = TrainingConfig {
            learning_rate: 0.5,
            epochs: 60,
            batch_size: 1,
            input_token_length: 16,
            target_token_length: 8,
            seed: 3,
            grad_clip: Some(1.0),
        };
        train(&mut params, std::slice::from_ref(&pair), &tconfig).unwrap();
        let greedy = generate(&params, &pair.0, &DecodeConfig::default()).unwrap();
        let beam = generate(
            &params,
            &pair.0,
            &DecodeConfig {
                strategy: DecodeStrategy::Beam,
                beam_width: 3,
                max_target_length: 64,
            },
        )
        .unwrap();
        assert_eq!(greedy, beam);
    }

    #[test]
    fn generate_rejects_zero_beam_width() {
        let params = init_model(&tiny_config()).unwrap();
        let config = DecodeConfig {
            strategy: DecodeStrategy::Beam,
            beam_width: 0,
            max_target_length: 8,
        };
        assert!(matches!(
            generate(&params, &input_of(vec![6]), &config),
            Err(ModelError::Config(_))
        ));
    }

    #[test]
    fn gradient_check_tiny_config() {
        let params = init_model(&tiny_config()).unwrap();
        let batch = tiny_batch();
        let err = gradient_check(&params, &batch, 1e-4).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn gradient_check_holds_on_the_default_sized_config() {
        let config = ModelConfig {
            d_model: 64,
            n_heads: 4,
            n_encoder_layers: 2,
            n_decoder_layers: 2,
            d_ff: 128,
            vocab_size: 64,
            max_positions: 64,
            seed: 8,
        };
        let params = init_model(&config).unwrap();
        let batch = vec![(
            input_of(vec![6, 7, 8, 9, 10]),
            TokenSequence::new(vec![11, 12, EOS_ID]),
        )];
        let err = gradient_check(&params, &batch, 1e-4).unwrap();
        assert!(err < 1e-3, "max relative error {err}");
    }

    #[test]
    fn gradient_check_is_deterministic_and_validates_epsilon() {
        let params = init_model(&tiny_config()).unwrap();
        let batch = tiny_batch();
        let a = gradient_check(&params, &batch, 1e-4).unwrap();
        let b = gradient_check(&params, &batch, 1e-4).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            gradient_check(&params, &batch, 0.0),
            Err(ModelError::BadParameter(_))
        ));
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut params = init_model(&tiny_config()).unwrap();
        // train a little so weights are not the init values
        let pairs = tiny_batch();
        let tconfig = TrainingConfig {
            learning_rate: 1e-3,
            epochs: 2,
            batch_size: 2,
            input_token_length: 16,
            target_token_length: 8,
            seed: 9,
            grad_clip: Some(1.0),
        };
        train(&mut params, &pairs, &tconfig).unwrap();
        save_checkpoint(&params, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(params, loaded);
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let params = init_model(&tiny_config()).unwrap();
        save_checkpoint(&params, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(ModelError::Checkpoint(_))
        ));
        let params2 = init_model(&tiny_config()).unwrap();
        save_checkpoint(&params2, &path).unwrap();
        let mut truncated = std::fs::read(&path).unwrap();
        truncated.truncate(truncated.len() - 9);
        std::fs::write(&path, &truncated).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(ModelError::Checkpoint(_))
        ));
    }
}
