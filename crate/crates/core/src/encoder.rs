//! Audio-visual feature encoder.
//!
//! A deliberately small stand-in for the heavyweight backbones used on real
//! data: each modality is projected to a shared width, then refined by one
//! hybrid layer of self-attention over its own segments plus cross-attention
//! over the other modality's segments (single head, scaled dot-product).
//! Output per modality is `proj + LN(self_attn) + LN(cross_attn)`.

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::rng::Rng;
use crate::tape::{NodeId, Tape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Audio,
    Visual,
}

/// A per-modality feature sequence: one row per temporal segment.
#[derive(Clone, Debug)]
pub struct FeatureSequence {
    pub modality: Modality,
    pub values: Matrix,
}

impl FeatureSequence {
    pub fn segments(&self) -> usize {
        self.values.rows()
    }

    pub fn width(&self) -> usize {
        self.values.cols()
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub d_in_audio: usize,
    pub d_in_visual: usize,
    pub hidden: usize,
    /// Add fixed sinusoidal position terms after the input projection.
    #[serde(default)]
    pub positional: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            d_in_audio: 16,
            d_in_visual: 24,
            hidden: 32,
            positional: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttentionParams {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
}

impl AttentionParams {
    pub fn seeded(d: usize, rng: &mut Rng) -> Self {
        let scale = 1.0 / (d as f64).sqrt();
        AttentionParams {
            w_q: Matrix::randn(d, d, scale, rng),
            w_k: Matrix::randn(d, d, scale, rng),
            w_v: Matrix::randn(d, d, scale, rng),
        }
    }

    pub fn zeroed(d: usize) -> Self {
        AttentionParams {
            w_q: Matrix::zeros(d, d),
            w_k: Matrix::zeros(d, d),
            w_v: Matrix::zeros(d, d),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LayerNormParams {
    pub gain: Matrix,
    pub bias: Matrix,
}

impl LayerNormParams {
    pub fn unit(d: usize) -> Self {
        LayerNormParams {
            gain: Matrix::filled(1, d, 1.0),
            bias: Matrix::zeros(1, d),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModalityEncoderParams {
    pub w_in: Matrix,
    pub self_attn: AttentionParams,
    pub cross_attn: AttentionParams,
    pub ln_self: LayerNormParams,
    pub ln_cross: LayerNormParams,
}

impl ModalityEncoderParams {
    fn seeded(d_in: usize, d: usize, rng: &mut Rng) -> Self {
        ModalityEncoderParams {
            w_in: Matrix::randn(d_in, d, 1.0 / (d_in as f64).sqrt(), rng),
            self_attn: AttentionParams::seeded(d, rng),
            cross_attn: AttentionParams::seeded(d, rng),
            ln_self: LayerNormParams::unit(d),
            ln_cross: LayerNormParams::unit(d),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub audio: ModalityEncoderParams,
    pub visual: ModalityEncoderParams,
}

impl EncoderParams {
    pub fn seeded(config: EncoderConfig, rng: &mut Rng) -> Self {
        EncoderParams {
            config,
            audio: ModalityEncoderParams::seeded(config.d_in_audio, config.hidden, rng),
            visual: ModalityEncoderParams::seeded(config.d_in_visual, config.hidden, rng),
        }
    }

    pub fn named(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (tag, m) in [("audio", &self.audio), ("visual", &self.visual)] {
            out.push((format!("encoder/{tag}/w_in"), &m.w_in));
            out.push((format!("encoder/{tag}/self/w_q"), &m.self_attn.w_q));
            out.push((format!("encoder/{tag}/self/w_k"), &m.self_attn.w_k));
            out.push((format!("encoder/{tag}/self/w_v"), &m.self_attn.w_v));
            out.push((format!("encoder/{tag}/cross/w_q"), &m.cross_attn.w_q));
            out.push((format!("encoder/{tag}/cross/w_k"), &m.cross_attn.w_k));
            out.push((format!("encoder/{tag}/cross/w_v"), &m.cross_attn.w_v));
            out.push((format!("encoder/{tag}/ln_self/gain"), &m.ln_self.gain));
            out.push((format!("encoder/{tag}/ln_self/bias"), &m.ln_self.bias));
            out.push((format!("encoder/{tag}/ln_cross/gain"), &m.ln_cross.gain));
            out.push((format!("encoder/{tag}/ln_cross/bias"), &m.ln_cross.bias));
        }
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = Vec::new();
        for (tag, m) in [("audio", &mut self.audio), ("visual", &mut self.visual)] {
            out.push((format!("encoder/{tag}/w_in"), &mut m.w_in));
            out.push((format!("encoder/{tag}/self/w_q"), &mut m.self_attn.w_q));
            out.push((format!("encoder/{tag}/self/w_k"), &mut m.self_attn.w_k));
            out.push((format!("encoder/{tag}/self/w_v"), &mut m.self_attn.w_v));
            out.push((format!("encoder/{tag}/cross/w_q"), &mut m.cross_attn.w_q));
            out.push((format!("encoder/{tag}/cross/w_k"), &mut m.cross_attn.w_k));
            out.push((format!("encoder/{tag}/cross/w_v"), &mut m.cross_attn.w_v));
            out.push((format!("encoder/{tag}/ln_self/gain"), &mut m.ln_self.gain));
            out.push((format!("encoder/{tag}/ln_self/bias"), &mut m.ln_self.bias));
            out.push((format!("encoder/{tag}/ln_cross/gain"), &mut m.ln_cross.gain));
            out.push((format!("encoder/{tag}/ln_cross/bias"), &mut m.ln_cross.bias));
        }
        out
    }

    /// Insert every parameter as a trainable tape variable.
    pub fn insert(&self, tape: &mut Tape) -> EncoderNodes {
        EncoderNodes {
            audio: ModalityEncoderNodes::insert(&self.audio, tape),
            visual: ModalityEncoderNodes::insert(&self.visual, tape),
            hidden: self.config.hidden,
            positional: self.config.positional,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionNodes {
    pub w_q: NodeId,
    pub w_k: NodeId,
    pub w_v: NodeId,
}

impl AttentionNodes {
    fn insert(p: &AttentionParams, tape: &mut Tape) -> Self {
        AttentionNodes {
            w_q: tape.variable(p.w_q.clone()),
            w_k: tape.variable(p.w_k.clone()),
            w_v: tape.variable(p.w_v.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerNormNodes {
    pub gain: NodeId,
    pub bias: NodeId,
}

impl LayerNormNodes {
    fn insert(p: &LayerNormParams, tape: &mut Tape) -> Self {
        LayerNormNodes {
            gain: tape.variable(p.gain.clone()),
            bias: tape.variable(p.bias.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ModalityEncoderNodes {
    pub w_in: NodeId,
    pub self_attn: AttentionNodes,
    pub cross_attn: AttentionNodes,
    pub ln_self: LayerNormNodes,
    pub ln_cross: LayerNormNodes,
}

impl ModalityEncoderNodes {
    fn insert(p: &ModalityEncoderParams, tape: &mut Tape) -> Self {
        ModalityEncoderNodes {
            w_in: tape.variable(p.w_in.clone()),
            self_attn: AttentionNodes::insert(&p.self_attn, tape),
            cross_attn: AttentionNodes::insert(&p.cross_attn, tape),
            ln_self: LayerNormNodes::insert(&p.ln_self, tape),
            ln_cross: LayerNormNodes::insert(&p.ln_cross, tape),
        }
    }

    fn ids(&self, out: &mut Vec<NodeId>) {
        out.extend([
            self.w_in,
            self.self_attn.w_q,
            self.self_attn.w_k,
            self.self_attn.w_v,
            self.cross_attn.w_q,
            self.cross_attn.w_k,
            self.cross_attn.w_v,
            self.ln_self.gain,
            self.ln_self.bias,
            self.ln_cross.gain,
            self.ln_cross.bias,
        ]);
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EncoderNodes {
    pub audio: ModalityEncoderNodes,
    pub visual: ModalityEncoderNodes,
    pub hidden: usize,
    pub positional: bool,
}

impl EncoderNodes {
    /// Node ids in the same order as [`EncoderParams::named`].
    pub fn ids(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        self.audio.ids(&mut out);
        self.visual.ids(&mut out);
        out
    }
}

/// Scaled dot-product attention. Returns (context, attention, raw logits);
/// attention rows are softmax-normalized over the key axis.
pub fn attention(
    tape: &mut Tape,
    query_input: NodeId,
    key_value_input: NodeId,
    params: &AttentionNodes,
    d: usize,
) -> (NodeId, NodeId, NodeId) {
    let q = tape.matmul(query_input, params.w_q);
    let k = tape.matmul(key_value_input, params.w_k);
    let v = tape.matmul(key_value_input, params.w_v);
    let k_t = tape.transpose(k);
    let scores = tape.matmul(q, k_t);
    let raw_logits = tape.scale(scores, 1.0 / (d as f64).sqrt());
    let attn = tape.softmax_rows(raw_logits);
    let context = tape.matmul(attn, v);
    (context, attn, raw_logits)
}

/// Everything the encoder produced for one video, including the attention
/// maps for introspection.
pub struct EncodeOutput {
    pub audio: NodeId,
    pub visual: NodeId,
    pub self_attn_audio: NodeId,
    pub self_attn_visual: NodeId,
    pub cross_attn_audio: NodeId,
    pub cross_attn_visual: NodeId,
}

/// Encode raw per-modality features into entangled hidden sequences.
pub fn encode(
    tape: &mut Tape,
    raw_audio: NodeId,
    raw_visual: NodeId,
    params: &EncoderNodes,
) -> EncodeOutput {
    let t_a = tape.value(raw_audio).rows();
    let t_v = tape.value(raw_visual).rows();
    assert_eq!(
        t_a, t_v,
        "segment count mismatch between modalities: {t_a} vs {t_v}"
    );
    let d = params.hidden;
    for (name, raw, w_in) in [
        ("audio", raw_audio, params.audio.w_in),
        ("visual", raw_visual, params.visual.w_in),
    ] {
        assert_eq!(
            tape.value(raw).cols(),
            tape.value(w_in).rows(),
            "{name} input width {} does not match projection input {}",
            tape.value(raw).cols(),
            tape.value(w_in).rows()
        );
    }

    let mut project = |raw: NodeId, m: &ModalityEncoderNodes| -> NodeId {
        let h = tape.matmul(raw, m.w_in);
        if params.positional {
            let pe = tape.constant(sinusoidal_encoding(t_a, d));
            tape.add(h, pe)
        } else {
            h
        }
    };
    let h_a = project(raw_audio, &params.audio);
    let h_v = project(raw_visual, &params.visual);

    let mut half = |own: NodeId, other: NodeId, m: &ModalityEncoderNodes| {
        let (self_ctx, self_attn, _) = attention(tape, own, own, &m.self_attn, d);
        let (cross_ctx, cross_attn, _) = attention(tape, own, other, &m.cross_attn, d);
        let self_norm = tape.layer_norm(self_ctx, m.ln_self.gain, m.ln_self.bias);
        let cross_norm = tape.layer_norm(cross_ctx, m.ln_cross.gain, m.ln_cross.bias);
        let partial = tape.add(own, self_norm);
        let out = tape.add(partial, cross_norm);
        (out, self_attn, cross_attn)
    };
    let (f_a, self_attn_audio, cross_attn_audio) = half(h_a, h_v, &params.audio);
    let (f_v, self_attn_visual, cross_attn_visual) = half(h_v, h_a, &params.visual);

    EncodeOutput {
        audio: f_a,
        visual: f_v,
        self_attn_audio,
        self_attn_visual,
        cross_attn_audio,
        cross_attn_visual,
    }
}

/// Value-space convenience: encode one video's raw feature sequences
/// without the caller managing a tape. Gradients are not tracked.
pub fn encode_features(
    params: &EncoderParams,
    audio: &FeatureSequence,
    visual: &FeatureSequence,
) -> (FeatureSequence, FeatureSequence) {
    assert_eq!(
        audio.modality,
        Modality::Audio,
        "first argument must be the audio sequence"
    );
    assert_eq!(
        visual.modality,
        Modality::Visual,
        "second argument must be the visual sequence"
    );
    let mut tape = Tape::new();
    let nodes = params.insert(&mut tape);
    let a = tape.constant(audio.values.clone());
    let v = tape.constant(visual.values.clone());
    let out = encode(&mut tape, a, v, &nodes);
    (
        FeatureSequence {
            modality: Modality::Audio,
            values: tape.value(out.audio).clone(),
        },
        FeatureSequence {
            modality: Modality::Visual,
            values: tape.value(out.visual).clone(),
        },
    )
}

fn sinusoidal_encoding(t: usize, d: usize) -> Matrix {
    Matrix::from_fn(t, d, |pos, j| {
        let rate = (pos as f64) / 10_000f64.powf((2 * (j / 2)) as f64 / d as f64);
        if j % 2 == 0 {
            rate.sin()
        } else {
            rate.cos()
        }
    })
}
