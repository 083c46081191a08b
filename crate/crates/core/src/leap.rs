//! Label-query cross-attention decoder.
//!
//! Each block uses the class label embeddings as attention queries against
//! one modality's segment features (keys and values), then refines the label
//! embeddings through a residual feed-forward step:
//!
//! ```text
//! Q = L W_q, K = F W_k, V = F W_v
//! raw_logits = Q K^T / sqrt(d)            (C x T)
//! A          = row_softmax(raw_logits)
//! L~         = L + LN(A V)
//! L'         = L~ + LN(FF(L~))
//! ```
//!
//! Blocks iterate with the refined labels feeding the next block and the
//! same features reused every iteration. Segment-level probabilities come
//! from the raw (pre-softmax, scaled) logits of the selected block;
//! video-level probabilities from its refined label embeddings.

use serde::{Deserialize, Serialize};

use crate::encoder::{AttentionNodes, AttentionParams, LayerNormNodes, LayerNormParams};
use crate::matrix::Matrix;
use crate::rng::Rng;
use crate::tape::{NodeId, Tape};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LeapBlockParams {
    pub attn: AttentionParams,
    pub ff_w1: Matrix,
    pub ff_b1: Matrix,
    pub ff_w2: Matrix,
    pub ff_b2: Matrix,
    pub ln_attn: LayerNormParams,
    pub ln_ff: LayerNormParams,
}

impl LeapBlockParams {
    /// Feed-forward hidden width is 2d with a rectifier in between.
    pub fn seeded(d: usize, rng: &mut Rng) -> Self {
        let d_ff = 2 * d;
        LeapBlockParams {
            attn: AttentionParams::seeded(d, rng),
            ff_w1: Matrix::randn(d, d_ff, 1.0 / (d as f64).sqrt(), rng),
            ff_b1: Matrix::zeros(1, d_ff),
            ff_w2: Matrix::randn(d_ff, d, 1.0 / (d_ff as f64).sqrt(), rng),
            ff_b2: Matrix::zeros(1, d),
            ln_attn: LayerNormParams::unit(d),
            ln_ff: LayerNormParams::unit(d),
        }
    }

    pub fn named(&self, prefix: &str) -> Vec<(String, &Matrix)> {
        vec![
            (format!("{prefix}/w_q"), &self.attn.w_q),
            (format!("{prefix}/w_k"), &self.attn.w_k),
            (format!("{prefix}/w_v"), &self.attn.w_v),
            (format!("{prefix}/ff_w1"), &self.ff_w1),
            (format!("{prefix}/ff_b1"), &self.ff_b1),
            (format!("{prefix}/ff_w2"), &self.ff_w2),
            (format!("{prefix}/ff_b2"), &self.ff_b2),
            (format!("{prefix}/ln_attn/gain"), &self.ln_attn.gain),
            (format!("{prefix}/ln_attn/bias"), &self.ln_attn.bias),
            (format!("{prefix}/ln_ff/gain"), &self.ln_ff.gain),
            (format!("{prefix}/ln_ff/bias"), &self.ln_ff.bias),
        ]
    }

    pub fn named_mut(&mut self, prefix: &str) -> Vec<(String, &mut Matrix)> {
        vec![
            (format!("{prefix}/w_q"), &mut self.attn.w_q),
            (format!("{prefix}/w_k"), &mut self.attn.w_k),
            (format!("{prefix}/w_v"), &mut self.attn.w_v),
            (format!("{prefix}/ff_w1"), &mut self.ff_w1),
            (format!("{prefix}/ff_b1"), &mut self.ff_b1),
            (format!("{prefix}/ff_w2"), &mut self.ff_w2),
            (format!("{prefix}/ff_b2"), &mut self.ff_b2),
            (format!("{prefix}/ln_attn/gain"), &mut self.ln_attn.gain),
            (format!("{prefix}/ln_attn/bias"), &mut self.ln_attn.bias),
            (format!("{prefix}/ln_ff/gain"), &mut self.ln_ff.gain),
            (format!("{prefix}/ln_ff/bias"), &mut self.ln_ff.bias),
        ]
    }

    pub fn insert(&self, tape: &mut Tape) -> LeapBlockNodes {
        LeapBlockNodes {
            attn: AttentionNodes {
                w_q: tape.variable(self.attn.w_q.clone()),
                w_k: tape.variable(self.attn.w_k.clone()),
                w_v: tape.variable(self.attn.w_v.clone()),
            },
            ff_w1: tape.variable(self.ff_w1.clone()),
            ff_b1: tape.variable(self.ff_b1.clone()),
            ff_w2: tape.variable(self.ff_w2.clone()),
            ff_b2: tape.variable(self.ff_b2.clone()),
            ln_attn: LayerNormNodes {
                gain: tape.variable(self.ln_attn.gain.clone()),
                bias: tape.variable(self.ln_attn.bias.clone()),
            },
            ln_ff: LayerNormNodes {
                gain: tape.variable(self.ln_ff.gain.clone()),
                bias: tape.variable(self.ln_ff.bias.clone()),
            },
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LeapBlockNodes {
    pub attn: AttentionNodes,
    pub ff_w1: NodeId,
    pub ff_b1: NodeId,
    pub ff_w2: NodeId,
    pub ff_b2: NodeId,
    pub ln_attn: LayerNormNodes,
    pub ln_ff: LayerNormNodes,
}

impl LeapBlockNodes {
    pub fn ids(&self, out: &mut Vec<NodeId>) {
        out.extend([
            self.attn.w_q,
            self.attn.w_k,
            self.attn.w_v,
            self.ff_w1,
            self.ff_b1,
            self.ff_w2,
            self.ff_b2,
            self.ln_attn.gain,
            self.ln_attn.bias,
            self.ln_ff.gain,
            self.ln_ff.bias,
        ]);
    }
}

/// One block's products: refined labels (C x d), softmax attention (C x T),
/// and the pre-softmax scaled logits (C x T) the segment head reads.
#[derive(Clone, Copy, Debug)]
pub struct LeapBlockOutput {
    pub refined: NodeId,
    pub attention: NodeId,
    pub raw_logits: NodeId,
}

pub fn leap_block(
    tape: &mut Tape,
    labels_in: NodeId,
    features: NodeId,
    params: &LeapBlockNodes,
) -> LeapBlockOutput {
    let d = tape.value(labels_in).cols();
    assert_eq!(
        tape.value(features).cols(),
        d,
        "feature width {} does not match label width {d}",
        tape.value(features).cols()
    );
    assert_eq!(
        tape.value(params.attn.w_q).rows(),
        d,
        "projection width {} does not match label width {d}",
        tape.value(params.attn.w_q).rows()
    );

    let q = tape.matmul(labels_in, params.attn.w_q);
    let k = tape.matmul(features, params.attn.w_k);
    let v = tape.matmul(features, params.attn.w_v);
    let k_t = tape.transpose(k);
    let scores = tape.matmul(q, k_t);
    let raw_logits = tape.scale(scores, 1.0 / (d as f64).sqrt());
    let attention = tape.softmax_rows(raw_logits);
    let context = tape.matmul(attention, v);
    let context_norm = tape.layer_norm(context, params.ln_attn.gain, params.ln_attn.bias);
    let labels_mid = tape.add(labels_in, context_norm);

    let hidden_pre = tape.matmul(labels_mid, params.ff_w1);
    let hidden_biased = tape.add_row(hidden_pre, params.ff_b1);
    let hidden = tape.relu(hidden_biased);
    let ff_pre = tape.matmul(hidden, params.ff_w2);
    let ff = tape.add_row(ff_pre, params.ff_b2);
    let ff_norm = tape.layer_norm(ff, params.ln_ff.gain, params.ln_ff.bias);
    let refined = tape.add(labels_mid, ff_norm);

    LeapBlockOutput {
        refined,
        attention,
        raw_logits,
    }
}

/// Iterate the block stack: block i consumes block i-1's refined labels and
/// the unchanged features. Returns every block's output.
pub fn run_leap(
    tape: &mut Tape,
    labels0: NodeId,
    features: NodeId,
    blocks: &[LeapBlockNodes],
) -> Vec<LeapBlockOutput> {
    assert!(!blocks.is_empty(), "run_leap requires at least one block");
    let mut outputs = Vec::with_capacity(blocks.len());
    let mut labels = labels0;
    for block in blocks {
        let out = leap_block(tape, labels, features, block);
        labels = out.refined;
        outputs.push(out);
    }
    outputs
}

/// Which block's outputs feed the prediction heads.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockSelect {
    First,
    #[default]
    Last,
    Average,
}

/// Resolve the (raw_logits, refined_labels) pair the heads consume.
pub fn select_block_output(
    tape: &mut Tape,
    outputs: &[LeapBlockOutput],
    select: BlockSelect,
) -> (NodeId, NodeId) {
    assert!(!outputs.is_empty(), "no block outputs to select from");
    match select {
        BlockSelect::First => (outputs[0].raw_logits, outputs[0].refined),
        BlockSelect::Last => {
            let last = outputs.last().unwrap();
            (last.raw_logits, last.refined)
        }
        BlockSelect::Average => {
            let inv = 1.0 / outputs.len() as f64;
            let mut logits = outputs[0].raw_logits;
            let mut refined = outputs[0].refined;
            for out in &outputs[1..] {
                logits = tape.add(logits, out.raw_logits);
                refined = tape.add(refined, out.refined);
            }
            (tape.scale(logits, inv), tape.scale(refined, inv))
        }
    }
}

/// Segment-level probabilities: sigmoid of the transposed raw logits,
/// yielding T x C.
pub fn segment_predictions(tape: &mut Tape, raw_logits: NodeId) -> NodeId {
    let transposed = tape.transpose(raw_logits);
    tape.sigmoid(transposed)
}

/// Video-level probabilities: sigmoid(head . refined^T), yielding 1 x C.
/// One head is shared by both modalities.
pub fn video_predictions(tape: &mut Tape, refined: NodeId, head: NodeId) -> NodeId {
    assert_eq!(
        tape.value(head).cols(),
        tape.value(refined).cols(),
        "head width {} does not match label width {}",
        tape.value(head).cols(),
        tape.value(refined).cols()
    );
    let refined_t = tape.transpose(refined);
    let logits = tape.matmul(head, refined_t);
    tape.sigmoid(logits)
}

/// Plain-value predictions for one video, as consumed by evaluation.
#[derive(Clone, Debug)]
pub struct PredictionBundle {
    /// T x C segment probabilities.
    pub segment_audio: Matrix,
    pub segment_visual: Matrix,
    /// 1 x C video probabilities.
    pub video_audio: Matrix,
    pub video_visual: Matrix,
    /// 1 x C binary union of the thresholded video probabilities.
    pub union: Matrix,
}

impl PredictionBundle {
    pub fn from_probabilities(
        segment_audio: Matrix,
        segment_visual: Matrix,
        video_audio: Matrix,
        video_visual: Matrix,
        threshold: f64,
    ) -> Self {
        let union = union_prediction(&video_audio, &video_visual, threshold);
        PredictionBundle {
            segment_audio,
            segment_visual,
            video_audio,
            video_visual,
            union,
        }
    }
}

/// Hard video-level union: 1 where either modality reaches the threshold.
/// Ties count as positive.
pub fn union_prediction(p_audio: &Matrix, p_visual: &Matrix, threshold: f64) -> Matrix {
    assert_eq!(
        p_audio.shape(),
        p_visual.shape(),
        "union shape mismatch: {:?} vs {:?}",
        p_audio.shape(),
        p_visual.shape()
    );
    Matrix::from_fn(p_audio.rows(), p_audio.cols(), |i, j| {
        f64::from(p_audio.get(i, j) >= threshold || p_visual.get(i, j) >= threshold)
    })
}
