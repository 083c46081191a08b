//! Mini-batch training of the combined objective with fixed seeding.
//!
//! One tape per batch: parameters enter as variables, every video in the
//! batch contributes its per-video loss, and the batch loss is the mean.
//! Shuffling, parameter init, and label-embedding init all derive from the
//! experiment seed, so a (seed, config, dataset) triple fixes the entire run.

use serde::Serialize;
use serde_json::json;

use avvp_core::adam::AdamState;
use avvp_core::data::Dataset;
use avvp_core::loss::{avss_loss, basic_loss, cosine_matrix, eiou_matrix, total_loss};
use avvp_core::matrix::Matrix;
use avvp_core::rng::Rng;
use avvp_core::tape::{NodeId, Tape};

use crate::checkpoint::Checkpoint;
use crate::config::ExperimentConfig;
use crate::evaluate::evaluate_model;
use crate::model::{forward, Model};
use crate::HarnessError;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-video objective value.
    pub total: f64,
    pub basic: f64,
    /// Monitored mse(similarity, eiou), unweighted; tracked even at lambda 0.
    pub avss: f64,
    /// lambda * avss as it entered the objective.
    pub avss_term: f64,
    pub union_bce: f64,
    pub segment_bce_audio: f64,
    pub segment_bce_visual: f64,
    pub val_segment_type_at_av: f64,
    pub val_event_type_at_av: f64,
}

pub struct TrainOutcome {
    /// Parameters after the final epoch.
    pub model: Model,
    /// Best epoch by validation segment-level Type@AV.
    pub best: Checkpoint,
    pub best_model: Model,
    pub log: Vec<EpochLog>,
}

impl TrainOutcome {
    /// Training log as a canonical-serializable value.
    pub fn log_json(&self, config: &ExperimentConfig) -> serde_json::Value {
        json!({
            "artifact_version": env!("CARGO_PKG_VERSION"),
            "config_hash": config.hash(),
            "best_epoch": self.best.epoch,
            "epochs": self.log.iter().map(|e| serde_json::to_value(e).unwrap()).collect::<Vec<_>>(),
        })
    }
}

pub fn train(config: &ExperimentConfig, dataset: &Dataset) -> Result<TrainOutcome, HarnessError> {
    config.validate()?;
    if dataset.train.is_empty() || dataset.val.is_empty() {
        return Err(HarnessError::Validation(
            "train and val splits must be nonempty".into(),
        ));
    }
    let mut model = Model::init(config, &dataset.config)?;
    let mut adam = AdamState::new(config.learning_rate, &model.param_values());
    let mut shuffle_rng = Rng::derive(config.seed, "shuffle");
    let config_hash = config.hash();

    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, Checkpoint, Model)> = None;

    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..dataset.train.len()).collect();
        shuffle_rng.shuffle(&mut order);

        let mut sums = EpochSums::default();
        for batch in order.chunks(config.batch_size) {
            let mut tape = Tape::new();
            let nodes = model.insert(&mut tape);
            let mut video_losses: Vec<NodeId> = Vec::with_capacity(batch.len());

            for &idx in batch {
                let video = &dataset.train[idx];
                let out = forward(&mut tape, &nodes, video);
                let similarity = cosine_matrix(&mut tape, out.features_audio, out.features_visual);
                let target = eiou_matrix(&video.pseudo_audio, &video.pseudo_visual);
                let avss = avss_loss(&mut tape, similarity, &target);
                let (basic, breakdown) = basic_loss(
                    &mut tape,
                    &out.preds,
                    &video.pseudo_audio,
                    &video.pseudo_visual,
                    &video.weak,
                );
                let (video_total, report) =
                    total_loss(&mut tape, basic, avss, config.lambda, breakdown);

                for (name, value) in [
                    ("basic", report.basic),
                    ("avss", report.avss),
                    ("total", report.total),
                    ("union_bce", report.breakdown.union_bce),
                    ("video_bce_audio", report.breakdown.video_bce_audio),
                    ("video_bce_visual", report.breakdown.video_bce_visual),
                    ("segment_bce_audio", report.breakdown.segment_bce_audio),
                    ("segment_bce_visual", report.breakdown.segment_bce_visual),
                ] {
                    if !value.is_finite() {
                        return Err(HarnessError::Runtime(format!(
                            "non-finite loss term {name} at epoch {epoch}, video {}",
                            video.id
                        )));
                    }
                }
                sums.absorb(&report);
                video_losses.push(video_total);
            }

            let mut acc = video_losses[0];
            for &loss in &video_losses[1..] {
                acc = tape.add(acc, loss);
            }
            let batch_loss = tape.scale(acc, 1.0 / batch.len() as f64);
            tape.backward(batch_loss);

            let grads: Vec<Matrix> = nodes
                .ids()
                .into_iter()
                .map(|id| tape.gradient(id).clone())
                .collect();
            let mut targets: Vec<&mut Matrix> =
                model.named_mut().into_iter().map(|(_, m)| m).collect();
            adam.step(&mut targets, &grads);
        }

        let val = evaluate_model(&model, &dataset.val, config.threshold);
        let entry = sums.into_log(epoch, val.all.segment.type_at_av, val.all.event.type_at_av);
        log.push(entry);

        let is_better = match &best {
            Some((score, _, _)) => entry.val_segment_type_at_av > *score,
            None => true,
        };
        if is_better {
            let checkpoint = Checkpoint::snapshot(&model, &adam, epoch, &config_hash);
            best = Some((entry.val_segment_type_at_av, checkpoint, model.clone()));
        }
    }

    let (_, best_checkpoint, best_model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model,
        best: best_checkpoint,
        best_model,
        log,
    })
}

#[derive(Default)]
struct EpochSums {
    count: usize,
    total: f64,
    basic: f64,
    avss: f64,
    avss_term: f64,
    union_bce: f64,
    segment_bce_audio: f64,
    segment_bce_visual: f64,
}

impl EpochSums {
    fn absorb(&mut self, report: &avvp_core::loss::LossReport) {
        self.count += 1;
        self.total += report.total;
        self.basic += report.basic;
        self.avss += report.avss;
        self.avss_term += report.lambda * report.avss;
        self.union_bce += report.breakdown.union_bce;
        self.segment_bce_audio += report.breakdown.segment_bce_audio;
        self.segment_bce_visual += report.breakdown.segment_bce_visual;
    }

    fn into_log(self, epoch: usize, val_segment: f64, val_event: f64) -> EpochLog {
        let n = self.count.max(1) as f64;
        EpochLog {
            epoch,
            total: self.total / n,
            basic: self.basic / n,
            avss: self.avss / n,
            avss_term: self.avss_term / n,
            union_bce: self.union_bce / n,
            segment_bce_audio: self.segment_bce_audio / n,
            segment_bce_visual: self.segment_bce_visual / n,
            val_segment_type_at_av: val_segment,
            val_event_type_at_av: val_event,
        }
    }
}
