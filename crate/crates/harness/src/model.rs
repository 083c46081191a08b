//! Model assembly: encoder plus one of the two decoders, with a flat named
//! parameter view for the optimizer and checkpoints.

use avvp_core::data::{DatasetConfig, VideoRecord};
use avvp_core::encoder::{encode, EncoderConfig, EncoderNodes, EncoderParams};
use avvp_core::labels::{default_class_names, LabelEmbeddings};
use avvp_core::leap::{
    run_leap, segment_predictions, select_block_output, video_predictions, BlockSelect,
    LeapBlockNodes, LeapBlockParams, PredictionBundle,
};
use avvp_core::loss::{probabilistic_or, PredictionNodes};
use avvp_core::matrix::Matrix;
use avvp_core::mmil::{mmil_forward, MmilNodes, MmilParams};
use avvp_core::rng::Rng;
use avvp_core::tape::{NodeId, Tape};

use crate::config::{DecoderKind, ExperimentConfig, LabelEmbeddingSource};
use crate::HarnessError;

#[derive(Clone, Debug)]
pub enum DecoderParams {
    Leap {
        audio_blocks: Vec<LeapBlockParams>,
        visual_blocks: Vec<LeapBlockParams>,
        /// 1 x d video head, shared by both modalities.
        head: Matrix,
        /// Trainable label embeddings (refinement happens per forward pass,
        /// but the base matrix receives gradients too).
        labels: LabelEmbeddings,
        block_select: BlockSelect,
    },
    Mmil(MmilParams),
}

#[derive(Clone, Debug)]
pub struct Model {
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
    pub num_classes: usize,
}

impl Model {
    pub fn init(
        config: &ExperimentConfig,
        data_config: &DatasetConfig,
    ) -> Result<Model, HarnessError> {
        let d = config.hidden;
        let c = data_config.num_classes;
        let mut rng = Rng::derive(config.seed, "model-init");
        let encoder_config = EncoderConfig {
            d_in_audio: data_config.d_in_audio,
            d_in_visual: data_config.d_in_visual,
            hidden: d,
            positional: config.positional,
        };
        let encoder = EncoderParams::seeded(encoder_config, &mut rng);
        let decoder = match config.decoder {
            DecoderKind::Leap => {
                let labels = match &config.label_embeddings {
                    LabelEmbeddingSource::Seeded => {
                        LabelEmbeddings::seeded(default_class_names(c), d, config.seed)
                    }
                    LabelEmbeddingSource::File { path } => LabelEmbeddings::from_file(path, c, d),
                }
                .map_err(|e| HarnessError::Validation(format!("label embeddings: {e}")))?;
                let audio_blocks = (0..config.leap_blocks)
                    .map(|_| LeapBlockParams::seeded(d, &mut rng))
                    .collect();
                let visual_blocks = (0..config.leap_blocks)
                    .map(|_| LeapBlockParams::seeded(d, &mut rng))
                    .collect();
                let head = Matrix::randn(1, d, 1.0 / (d as f64).sqrt(), &mut rng);
                DecoderParams::Leap {
                    audio_blocks,
                    visual_blocks,
                    head,
                    labels,
                    block_select: config.block_select,
                }
            }
            DecoderKind::Mmil => DecoderParams::Mmil(MmilParams::seeded(d, c, &mut rng)),
        };
        Ok(Model {
            encoder,
            decoder,
            num_classes: c,
        })
    }

    pub fn named(&self) -> Vec<(String, &Matrix)> {
        let mut out = self.encoder.named();
        match &self.decoder {
            DecoderParams::Leap {
                audio_blocks,
                visual_blocks,
                head,
                labels,
                ..
            } => {
                for (i, block) in audio_blocks.iter().enumerate() {
                    out.extend(block.named(&format!("leap/audio/block{i}")));
                }
                for (i, block) in visual_blocks.iter().enumerate() {
                    out.extend(block.named(&format!("leap/visual/block{i}")));
                }
                out.push(("leap/head".into(), head));
                out.push(("leap/labels".into(), &labels.values));
            }
            DecoderParams::Mmil(params) => out.extend(params.named()),
        }
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = self.encoder.named_mut();
        match &mut self.decoder {
            DecoderParams::Leap {
                audio_blocks,
                visual_blocks,
                head,
                labels,
                ..
            } => {
                for (i, block) in audio_blocks.iter_mut().enumerate() {
                    out.extend(block.named_mut(&format!("leap/audio/block{i}")));
                }
                for (i, block) in visual_blocks.iter_mut().enumerate() {
                    out.extend(block.named_mut(&format!("leap/visual/block{i}")));
                }
                out.push(("leap/head".into(), head));
                out.push(("leap/labels".into(), &mut labels.values));
            }
            DecoderParams::Mmil(params) => out.extend(params.named_mut()),
        }
        out
    }

    pub fn param_values(&self) -> Vec<Matrix> {
        self.named().into_iter().map(|(_, m)| m.clone()).collect()
    }

    /// Insert every parameter as a trainable tape variable, in the same
    /// order as [`Model::named`].
    pub fn insert(&self, tape: &mut Tape) -> ModelNodes {
        let ids: Vec<NodeId> = self
            .named()
            .into_iter()
            .map(|(_, m)| tape.variable(m.clone()))
            .collect();
        self.bind(&ids)
    }

    /// Build typed node handles over existing tape nodes laid out in
    /// [`Model::named`] order (the inverse of flattening).
    pub fn bind(&self, ids: &[NodeId]) -> ModelNodes {
        assert_eq!(
            ids.len(),
            self.named().len(),
            "id count does not match parameter count"
        );
        let mut cursor = ids.iter().copied();
        let mut next = || cursor.next().expect("enough ids");

        let mut modality = || avvp_core::encoder::ModalityEncoderNodes {
            w_in: next(),
            self_attn: avvp_core::encoder::AttentionNodes {
                w_q: next(),
                w_k: next(),
                w_v: next(),
            },
            cross_attn: avvp_core::encoder::AttentionNodes {
                w_q: next(),
                w_k: next(),
                w_v: next(),
            },
            ln_self: avvp_core::encoder::LayerNormNodes {
                gain: next(),
                bias: next(),
            },
            ln_cross: avvp_core::encoder::LayerNormNodes {
                gain: next(),
                bias: next(),
            },
        };
        let encoder = avvp_core::encoder::EncoderNodes {
            audio: modality(),
            visual: modality(),
            hidden: self.encoder.config.hidden,
            positional: self.encoder.config.positional,
        };

        let mut block = || LeapBlockNodes {
            attn: avvp_core::encoder::AttentionNodes {
                w_q: next(),
                w_k: next(),
                w_v: next(),
            },
            ff_w1: next(),
            ff_b1: next(),
            ff_w2: next(),
            ff_b2: next(),
            ln_attn: avvp_core::encoder::LayerNormNodes {
                gain: next(),
                bias: next(),
            },
            ln_ff: avvp_core::encoder::LayerNormNodes {
                gain: next(),
                bias: next(),
            },
        };
        let decoder = match &self.decoder {
            DecoderParams::Leap {
                audio_blocks,
                visual_blocks,
                block_select,
                ..
            } => {
                let audio: Vec<LeapBlockNodes> = (0..audio_blocks.len()).map(|_| block()).collect();
                let visual: Vec<LeapBlockNodes> =
                    (0..visual_blocks.len()).map(|_| block()).collect();
                DecoderNodes::Leap {
                    audio_blocks: audio,
                    visual_blocks: visual,
                    head: next(),
                    labels: next(),
                    block_select: *block_select,
                }
            }
            DecoderParams::Mmil(_) => DecoderNodes::Mmil(avvp_core::mmil::MmilNodes {
                w_cls_audio: next(),
                w_cls_visual: next(),
                w_temporal_audio: next(),
                w_temporal_visual: next(),
                w_modality_audio: next(),
                w_modality_visual: next(),
            }),
        };
        ModelNodes { encoder, decoder }
    }
}

#[derive(Clone, Debug)]
pub enum DecoderNodes {
    Leap {
        audio_blocks: Vec<LeapBlockNodes>,
        visual_blocks: Vec<LeapBlockNodes>,
        head: NodeId,
        labels: NodeId,
        block_select: BlockSelect,
    },
    Mmil(MmilNodes),
}

#[derive(Clone, Debug)]
pub struct ModelNodes {
    pub encoder: EncoderNodes,
    pub decoder: DecoderNodes,
}

impl ModelNodes {
    /// Node ids in the same order as [`Model::named`].
    pub fn ids(&self) -> Vec<NodeId> {
        let mut out = self.encoder.ids();
        match &self.decoder {
            DecoderNodes::Leap {
                audio_blocks,
                visual_blocks,
                head,
                labels,
                ..
            } => {
                for block in audio_blocks.iter().chain(visual_blocks.iter()) {
                    block.ids(&mut out);
                }
                out.push(*head);
                out.push(*labels);
            }
            DecoderNodes::Mmil(nodes) => nodes.ids(&mut out),
        }
        out
    }
}

/// Differentiable forward products for one video.
pub struct ForwardOutput {
    pub preds: PredictionNodes,
    pub features_audio: NodeId,
    pub features_visual: NodeId,
}

/// Run the full encoder/decoder stack on one video's raw features.
pub fn forward(tape: &mut Tape, nodes: &ModelNodes, video: &VideoRecord) -> ForwardOutput {
    let raw_audio = tape.constant(video.audio.clone());
    let raw_visual = tape.constant(video.visual.clone());
    let encoded = encode(tape, raw_audio, raw_visual, &nodes.encoder);

    let preds = match &nodes.decoder {
        DecoderNodes::Leap {
            audio_blocks,
            visual_blocks,
            head,
            labels,
            block_select,
        } => {
            let outs_a = run_leap(tape, *labels, encoded.audio, audio_blocks);
            let outs_v = run_leap(tape, *labels, encoded.visual, visual_blocks);
            let (logits_a, refined_a) = select_block_output(tape, &outs_a, *block_select);
            let (logits_v, refined_v) = select_block_output(tape, &outs_v, *block_select);
            let segment_audio = segment_predictions(tape, logits_a);
            let segment_visual = segment_predictions(tape, logits_v);
            let video_audio = video_predictions(tape, refined_a, *head);
            let video_visual = video_predictions(tape, refined_v, *head);
            // No pooled union exists here; train against the probabilistic OR.
            let union_prob = probabilistic_or(tape, video_audio, video_visual);
            PredictionNodes {
                segment_audio,
                segment_visual,
                video_audio,
                video_visual,
                union_prob,
            }
        }
        DecoderNodes::Mmil(params) => {
            let out = mmil_forward(tape, encoded.audio, encoded.visual, params);
            PredictionNodes {
                segment_audio: out.segment_audio,
                segment_visual: out.segment_visual,
                video_audio: out.video_audio,
                video_visual: out.video_visual,
                union_prob: out.union_prob,
            }
        }
    };
    ForwardOutput {
        preds,
        features_audio: encoded.audio,
        features_visual: encoded.visual,
    }
}

/// Inference snapshot: run forward and freeze the probabilities.
pub fn predict(model: &Model, video: &VideoRecord, threshold: f64) -> PredictionBundle {
    let mut tape = Tape::new();
    let nodes = model.insert(&mut tape);
    let out = forward(&mut tape, &nodes, video);
    PredictionBundle::from_probabilities(
        tape.value(out.preds.segment_audio).clone(),
        tape.value(out.preds.segment_visual).clone(),
        tape.value(out.preds.video_audio).clone(),
        tape.value(out.preds.video_visual).clone(),
        threshold,
    )
}
