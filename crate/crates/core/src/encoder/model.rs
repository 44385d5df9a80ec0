use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::weights::{Block, Dense, Norm, Weights};
use super::{ModelConfig, ModelError, ModelParams};
use crate::tensor::{Tape, Tensor, Var};
use crate::textprep::TokenizedExample;

/// Additive attention-score mask for PAD keys. `exp` of it underflows to
/// exactly zero, so masked keys contribute nothing.
const MASK_VALUE: f64 = -1e9;

/// Inverted dropout driven by a caller-owned generator.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut ChaCha8Rng,
}

impl Dropout<'_> {
    fn apply(&mut self, tape: &mut Tape, x: Var) -> Result<Var, ModelError> {
        if self.rate <= 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - self.rate;
        let shape = tape.shape(x).to_vec();
        let n: usize = shape.iter().product();
        let mask = (0..n)
            .map(|_| if self.rng.gen_bool(keep) { 1.0 / keep } else { 0.0 })
            .collect();
        let mask = tape.constant(Tensor::new(shape, mask)?);
        Ok(tape.mul(x, mask)?)
    }
}

/// Tape handles produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardOutput {
    /// Final-layer representation at position 0, `[N × hidden]`.
    pub h_cls: Var,
    /// Classifier scores before softmax, `[N × C]`.
    pub logits: Var,
    pub probs: Var,
}

fn dense(tape: &mut Tape, x: Var, d: &Dense<Var>) -> Result<Var, ModelError> {
    let y = tape.matmul(x, d.weight)?;
    Ok(tape.add_bias(y, d.bias)?)
}

fn norm(tape: &mut Tape, x: Var, n: &Norm<Var>) -> Result<Var, ModelError> {
    Ok(tape.layer_norm(x, n.gain, n.bias)?)
}

/// Checks the batch against the config and returns the longest attention
/// length, which is the sequence length actually computed.
pub(crate) fn check_batch(config: &ModelConfig, batch: &[TokenizedExample]) -> Result<usize, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let mut longest = 0;
    for (index, ex) in batch.iter().enumerate() {
        if ex.ids.len() != config.max_len {
            return Err(ModelError::SequenceLength {
                index,
                expected: config.max_len,
                found: ex.ids.len(),
            });
        }
        if ex.attention_len == 0 || ex.attention_len > config.max_len {
            return Err(ModelError::AttentionLength {
                index,
                len: ex.attention_len,
                max_len: config.max_len,
            });
        }
        if let Some(&id) = ex.ids.iter().find(|&&id| id >= config.vocab_size) {
            return Err(ModelError::TokenOutOfRange {
                id,
                vocab_size: config.vocab_size,
            });
        }
        longest = longest.max(ex.attention_len);
    }
    Ok(longest)
}

/// Gathers embedding rows for the first `seq_len` ids of every example,
/// stacked into `[N·seq_len × hidden]`.
pub fn embed_tokens(
    tape: &mut Tape,
    weights: &Weights<Var>,
    batch: &[TokenizedExample],
    seq_len: usize,
) -> Result<Var, ModelError> {
    let ids: Vec<usize> = batch
        .iter()
        .flat_map(|ex| ex.ids[..seq_len].iter().copied())
        .collect();
    Ok(tape.gather_rows(weights.embedding, &ids)?)
}

fn attention_mask(seq_len: usize, len: usize) -> Tensor {
    let mut mask = Tensor::zeros(&[seq_len, seq_len]);
    for r in 0..seq_len {
        for c in len.min(seq_len)..seq_len {
            mask.data_mut()[r * seq_len + c] = MASK_VALUE;
        }
    }
    mask
}

fn self_attention(
    tape: &mut Tape,
    block: &Block<Var>,
    config: &ModelConfig,
    x: Var,
    masks: &[Var],
    seq_len: usize,
) -> Result<Var, ModelError> {
    let q = dense(tape, x, &block.query)?;
    let k = dense(tape, x, &block.key)?;
    let v = dense(tape, x, &block.value)?;
    let dk = config.head_size();
    let scale = 1.0 / (dk as f64).sqrt();
    let mut per_example = Vec::with_capacity(masks.len());
    for (i, &mask) in masks.iter().enumerate() {
        let row0 = i * seq_len;
        let mut heads = Vec::with_capacity(config.n_heads);
        for h in 0..config.n_heads {
            let col0 = h * dk;
            let qh = tape.slice(q, row0, seq_len, col0, dk)?;
            let kh = tape.slice(k, row0, seq_len, col0, dk)?;
            let vh = tape.slice(v, row0, seq_len, col0, dk)?;
            let kt = tape.transpose(kh)?;
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores, scale);
            let scores = tape.add(scores, mask)?;
            let attn = tape.softmax(scores, 1)?;
            heads.push(tape.matmul(attn, vh)?);
        }
        per_example.push(tape.concat_cols(&heads)?);
    }
    let merged = tape.concat_rows(&per_example)?;
    dense(tape, merged, &block.attn_out)
}

/// Runs the transformer on precomputed token embeddings
/// (`[N·seq_len × hidden]`, one block of `seq_len` rows per example).
/// `lens[i]` is the attention length of example `i`; keys at or beyond it
/// are masked.
pub fn encode_embeddings(
    tape: &mut Tape,
    weights: &Weights<Var>,
    config: &ModelConfig,
    tokens: Var,
    lens: &[usize],
    seq_len: usize,
    mut dropout: Option<&mut Dropout<'_>>,
) -> Result<ForwardOutput, ModelError> {
    if lens.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let n = lens.len();
    let pos_ids: Vec<usize> = (0..n).flat_map(|_| 0..seq_len).collect();
    let pos = tape.gather_rows(weights.positional, &pos_ids)?;
    let mut x = tape.add(tokens, pos)?;
    let masks: Vec<Var> = lens
        .iter()
        .map(|&len| tape.constant(attention_mask(seq_len, len)))
        .collect();

    for block in &weights.blocks {
        let a = norm(tape, x, &block.attn_norm)?;
        let mut a = self_attention(tape, block, config, a, &masks, seq_len)?;
        if let Some(d) = dropout.as_deref_mut() {
            a = d.apply(tape, a)?;
        }
        x = tape.add(x, a)?;

        let f = norm(tape, x, &block.ff_norm)?;
        let f = dense(tape, f, &block.ff_in)?;
        let f = tape.gelu(f);
        let mut f = dense(tape, f, &block.ff_out)?;
        if let Some(d) = dropout.as_deref_mut() {
            f = d.apply(tape, f)?;
        }
        x = tape.add(x, f)?;
    }
    let x = norm(tape, x, &weights.final_norm)?;
    let cls_rows: Vec<usize> = (0..n).map(|i| i * seq_len).collect();
    let h_cls = tape.gather_rows(x, &cls_rows)?;
    let logits = dense(tape, h_cls, &weights.classifier)?;
    let probs = tape.softmax(logits, 1)?;
    Ok(ForwardOutput { h_cls, logits, probs })
}

/// Full forward pass over a batch of tokenized examples.
///
/// Only the first `max(attention_len)` positions of the batch are computed;
/// positions past that are PAD for every example and masked out of
/// attention, so they cannot affect any output.
pub fn forward(
    tape: &mut Tape,
    weights: &Weights<Var>,
    config: &ModelConfig,
    batch: &[TokenizedExample],
    dropout: Option<&mut Dropout<'_>>,
) -> Result<ForwardOutput, ModelError> {
    let seq_len = check_batch(config, batch)?;
    forward_with_len(tape, weights, config, batch, seq_len, dropout)
}

pub(crate) fn forward_with_len(
    tape: &mut Tape,
    weights: &Weights<Var>,
    config: &ModelConfig,
    batch: &[TokenizedExample],
    seq_len: usize,
    dropout: Option<&mut Dropout<'_>>,
) -> Result<ForwardOutput, ModelError> {
    let tokens = embed_tokens(tape, weights, batch, seq_len)?;
    let lens: Vec<usize> = batch.iter().map(|ex| ex.attention_len).collect();
    encode_embeddings(tape, weights, config, tokens, &lens, seq_len, dropout)
}

/// Projection head: dense layers with GELU between them. The output is not
/// normalized.
pub fn project(tape: &mut Tape, weights: &Weights<Var>, h_cls: Var) -> Result<Var, ModelError> {
    let mut z = h_cls;
    let last = weights.projection.len().saturating_sub(1);
    for (i, layer) in weights.projection.iter().enumerate() {
        z = dense(tape, z, layer)?;
        if i < last {
            z = tape.gelu(z);
        }
    }
    Ok(z)
}

/// Values of a forward pass without gradient tracking.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub h_cls: Tensor,
    pub logits: Tensor,
    pub probs: Tensor,
    pub projection: Tensor,
}

pub fn infer(
    params: &ModelParams,
    config: &ModelConfig,
    batch: &[TokenizedExample],
) -> Result<Inference, ModelError> {
    let mut tape = Tape::new();
    let w = params.register(&mut tape, false);
    let out = forward(&mut tape, &w, config, batch, None)?;
    let z = project(&mut tape, &w, out.h_cls)?;
    Ok(Inference {
        h_cls: tape.value(out.h_cls).clone(),
        logits: tape.value(out.logits).clone(),
        probs: tape.value(out.probs).clone(),
        projection: tape.value(z).clone(),
    })
}

pub fn project_values(params: &ModelParams, h_cls: &Tensor) -> Result<Tensor, ModelError> {
    let mut tape = Tape::new();
    let w = params.register(&mut tape, false);
    let h = tape.constant(h_cls.clone());
    let z = project(&mut tape, &w, h)?;
    Ok(tape.value(z).clone())
}

/// Argmax class per example (lowest index on ties), evaluated in chunks.
pub fn predict(
    params: &ModelParams,
    config: &ModelConfig,
    examples: &[TokenizedExample],
    batch_size: usize,
) -> Result<Vec<usize>, ModelError> {
    let mut preds = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(batch_size.max(1)) {
        let out = infer(params, config, chunk)?;
        for r in 0..out.probs.rows() {
            let row = out.probs.row(r);
            let best = row
                .iter()
                .enumerate()
                .fold(0, |best, (j, &p)| if p > row[best] { j } else { best });
            preds.push(best);
        }
    }
    Ok(preds)
}
