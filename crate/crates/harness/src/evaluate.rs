//! Model evaluation over a split, on the full set and the
//! overlapping/non-overlapping subsets.

use serde_json::{json, Value};

use avvp_core::data::VideoRecord;
use avvp_core::leap::PredictionBundle;
use avvp_core::loss::EventLabelTensor;
use avvp_core::metrics::{
    aggregate, binarize, evaluate_video, split_overlapping, MetricReport, Subset, VideoEvaluation,
};

use crate::model::{predict, Model};

/// Event-level matching threshold of the standard protocol.
pub const MIOU_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug)]
pub struct EvaluationSet {
    pub all: MetricReport,
    /// Absent when the split has no videos of that kind.
    pub overlapping: Option<MetricReport>,
    pub non_overlapping: Option<MetricReport>,
}

impl EvaluationSet {
    pub fn to_json(&self) -> Value {
        let opt = |r: &Option<MetricReport>| match r {
            Some(report) => report.to_json(),
            None => Value::Null,
        };
        json!({
            "all": self.all.to_json(),
            "overlapping": opt(&self.overlapping),
            "non_overlapping": opt(&self.non_overlapping),
        })
    }
}

/// Score pre-computed prediction bundles against ground truth.
pub fn evaluate_predictions(
    bundles: &[PredictionBundle],
    videos: &[VideoRecord],
    threshold: f64,
) -> EvaluationSet {
    assert_eq!(bundles.len(), videos.len(), "one bundle per video required");
    assert!(!videos.is_empty(), "evaluation over an empty split");
    let evaluations: Vec<VideoEvaluation> = bundles
        .iter()
        .zip(videos.iter())
        .map(|(bundle, video)| {
            let pred_a = binarize(&bundle.segment_audio, threshold);
            let pred_v = binarize(&bundle.segment_visual, threshold);
            evaluate_video(
                &pred_a,
                &pred_v,
                &video.gt_audio.segment_labels,
                &video.gt_visual.segment_labels,
                MIOU_THRESHOLD,
            )
        })
        .collect();

    let gt_pairs: Vec<(EventLabelTensor, EventLabelTensor)> = videos
        .iter()
        .map(|v| (v.gt_audio.clone(), v.gt_visual.clone()))
        .collect();
    let (overlapping_ids, rest_ids) = split_overlapping(&gt_pairs);

    let pick = |ids: &[usize], subset: Subset| -> Option<MetricReport> {
        if ids.is_empty() {
            None
        } else {
            let sub: Vec<VideoEvaluation> = ids.iter().map(|&i| evaluations[i]).collect();
            Some(aggregate(&sub, subset))
        }
    };
    EvaluationSet {
        all: aggregate(&evaluations, Subset::All),
        overlapping: pick(&overlapping_ids, Subset::Overlapping),
        non_overlapping: pick(&rest_ids, Subset::NonOverlapping),
    }
}

/// Run the model over a split and score it.
pub fn evaluate_model(model: &Model, videos: &[VideoRecord], threshold: f64) -> EvaluationSet {
    let bundles: Vec<PredictionBundle> = videos
        .iter()
        .map(|v| predict(model, v, threshold))
        .collect();
    evaluate_predictions(&bundles, videos, threshold)
}
