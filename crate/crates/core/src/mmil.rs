//! Multi-instance-learning baseline decoder.
//!
//! Segment probabilities are plain linear classifications of the encoded
//! features. Video-level probabilities come from attentive pooling: a
//! modality-axis softmax (over the audio/visual pair, per segment and class)
//! followed by a temporal-axis softmax over the segments. The pooled union
//! probability is what learns from the weak video label.

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::rng::Rng;
use crate::tape::{NodeId, Tape};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MmilParams {
    /// d x C classification heads.
    pub w_cls_audio: Matrix,
    pub w_cls_visual: Matrix,
    /// d x C temporal-attention projections.
    pub w_temporal_audio: Matrix,
    pub w_temporal_visual: Matrix,
    /// d x C modality-attention projections.
    pub w_modality_audio: Matrix,
    pub w_modality_visual: Matrix,
}

impl MmilParams {
    pub fn seeded(d: usize, num_classes: usize, rng: &mut Rng) -> Self {
        let scale = 1.0 / (d as f64).sqrt();
        MmilParams {
            w_cls_audio: Matrix::randn(d, num_classes, scale, rng),
            w_cls_visual: Matrix::randn(d, num_classes, scale, rng),
            w_temporal_audio: Matrix::randn(d, num_classes, scale, rng),
            w_temporal_visual: Matrix::randn(d, num_classes, scale, rng),
            w_modality_audio: Matrix::randn(d, num_classes, scale, rng),
            w_modality_visual: Matrix::randn(d, num_classes, scale, rng),
        }
    }

    pub fn named(&self) -> Vec<(String, &Matrix)> {
        vec![
            ("mmil/w_cls_audio".into(), &self.w_cls_audio),
            ("mmil/w_cls_visual".into(), &self.w_cls_visual),
            ("mmil/w_temporal_audio".into(), &self.w_temporal_audio),
            ("mmil/w_temporal_visual".into(), &self.w_temporal_visual),
            ("mmil/w_modality_audio".into(), &self.w_modality_audio),
            ("mmil/w_modality_visual".into(), &self.w_modality_visual),
        ]
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        vec![
            ("mmil/w_cls_audio".into(), &mut self.w_cls_audio),
            ("mmil/w_cls_visual".into(), &mut self.w_cls_visual),
            ("mmil/w_temporal_audio".into(), &mut self.w_temporal_audio),
            ("mmil/w_temporal_visual".into(), &mut self.w_temporal_visual),
            ("mmil/w_modality_audio".into(), &mut self.w_modality_audio),
            ("mmil/w_modality_visual".into(), &mut self.w_modality_visual),
        ]
    }

    pub fn insert(&self, tape: &mut Tape) -> MmilNodes {
        MmilNodes {
            w_cls_audio: tape.variable(self.w_cls_audio.clone()),
            w_cls_visual: tape.variable(self.w_cls_visual.clone()),
            w_temporal_audio: tape.variable(self.w_temporal_audio.clone()),
            w_temporal_visual: tape.variable(self.w_temporal_visual.clone()),
            w_modality_audio: tape.variable(self.w_modality_audio.clone()),
            w_modality_visual: tape.variable(self.w_modality_visual.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MmilNodes {
    pub w_cls_audio: NodeId,
    pub w_cls_visual: NodeId,
    pub w_temporal_audio: NodeId,
    pub w_temporal_visual: NodeId,
    pub w_modality_audio: NodeId,
    pub w_modality_visual: NodeId,
}

impl MmilNodes {
    pub fn ids(&self, out: &mut Vec<NodeId>) {
        out.extend([
            self.w_cls_audio,
            self.w_cls_visual,
            self.w_temporal_audio,
            self.w_temporal_visual,
            self.w_modality_audio,
            self.w_modality_visual,
        ]);
    }
}

/// Differentiable products of the forward pass. Segment probabilities are
/// T x C, video and union probabilities 1 x C.
pub struct MmilOutput {
    pub segment_audio: NodeId,
    pub segment_visual: NodeId,
    pub video_audio: NodeId,
    pub video_visual: NodeId,
    pub union_prob: NodeId,
    /// C x T temporal weights for the pooled union stream (for inspection).
    pub temporal_weights_union: NodeId,
}

pub fn mmil_forward(
    tape: &mut Tape,
    features_audio: NodeId,
    features_visual: NodeId,
    params: &MmilNodes,
) -> MmilOutput {
    let d = tape.value(features_audio).cols();
    assert_eq!(
        tape.value(features_visual).cols(),
        d,
        "visual width {} does not match audio width {d}",
        tape.value(features_visual).cols()
    );
    assert_eq!(
        tape.value(params.w_cls_audio).rows(),
        d,
        "classifier input width {} does not match feature width {d}",
        tape.value(params.w_cls_audio).rows()
    );

    let seg_logits_a = tape.matmul(features_audio, params.w_cls_audio);
    let seg_logits_v = tape.matmul(features_visual, params.w_cls_visual);
    let segment_audio = tape.sigmoid(seg_logits_a);
    let segment_visual = tape.sigmoid(seg_logits_v);

    let temporal_a = tape.matmul(features_audio, params.w_temporal_audio);
    let temporal_v = tape.matmul(features_visual, params.w_temporal_visual);
    let modality_a = tape.matmul(features_audio, params.w_modality_audio);
    let modality_v = tape.matmul(features_visual, params.w_modality_visual);

    // Softmax over the two-element modality axis, per segment and class:
    // w_a = exp(m_a) / (exp(m_a) + exp(m_v)) = sigmoid(m_a - m_v).
    let modality_diff = tape.sub(modality_a, modality_v);
    let weight_a = tape.sigmoid(modality_diff);
    let weight_v = tape.affine(weight_a, -1.0, 1.0);

    // Per-modality video probabilities: temporal softmax over T, per class.
    let video_audio = temporal_pool(tape, segment_audio, temporal_a).0;
    let video_visual = temporal_pool(tape, segment_visual, temporal_v).0;

    // Union stream: modality-weighted segment probabilities and temporal
    // logits, pooled with the combined stream's own temporal softmax.
    let wa_seg = tape.hadamard(weight_a, segment_audio);
    let wv_seg = tape.hadamard(weight_v, segment_visual);
    let combined_seg = tape.add(wa_seg, wv_seg);
    let wa_tmp = tape.hadamard(weight_a, temporal_a);
    let wv_tmp = tape.hadamard(weight_v, temporal_v);
    let combined_tmp = tape.add(wa_tmp, wv_tmp);
    let (union_prob, temporal_weights_union) = temporal_pool(tape, combined_seg, combined_tmp);

    MmilOutput {
        segment_audio,
        segment_visual,
        video_audio,
        video_visual,
        union_prob,
        temporal_weights_union,
    }
}

/// Pool T x C segment probabilities into 1 x C with a per-class softmax over
/// the temporal logits. Returns (pooled, C x T weights).
fn temporal_pool(tape: &mut Tape, probs: NodeId, temporal_logits: NodeId) -> (NodeId, NodeId) {
    let logits_t = tape.transpose(temporal_logits); // C x T
    let weights = tape.softmax_rows(logits_t); // rows sum to 1 over T
    let probs_t = tape.transpose(probs); // C x T
    let weighted = tape.hadamard(weights, probs_t);
    let summed = tape.sum_rows(weighted); // C x 1
    (tape.transpose(summed), weights)
}
