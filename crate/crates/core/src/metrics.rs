//! Evaluation protocol: segment-level and event-level F1 for audio, visual,
//! and audio-visual events, plus Type@AV, Event@AV, and the
//! overlapping/non-overlapping subset split.
//!
//! Conventions, fixed here because upstream evaluation code leaves them
//! implicit:
//! - audio-visual events are the elementwise AND of the two modalities;
//! - F1 is computed per video, then averaged over the videos where the type
//!   is defined (a video with empty prediction and empty ground truth for a
//!   type is skipped for that type);
//! - event matching is greedy in descending temporal-IoU order, ties broken
//!   by earlier ground-truth start then earlier prediction start, with a
//!   match requiring IoU >= the threshold (0.5 in the standard protocol).

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::canonical::to_canonical_json;
use crate::loss::EventLabelTensor;
use crate::matrix::Matrix;

/// Threshold comparison is `>=`, so values exactly at the threshold count
/// as positive.
pub fn binarize(probs: &Matrix, threshold: f64) -> Matrix {
    probs.map(|p| f64::from(p >= threshold))
}

/// Audio-visual events: present where both modalities are positive.
pub fn derive_av(audio: &Matrix, visual: &Matrix) -> Matrix {
    assert_eq!(
        audio.shape(),
        visual.shape(),
        "derive_av shape mismatch: {:?} vs {:?}",
        audio.shape(),
        visual.shape()
    );
    Matrix::from_fn(audio.rows(), audio.cols(), |i, j| {
        audio.get(i, j) * visual.get(i, j)
    })
}

/// A maximal run of positive segments for one class. Bounds are inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EventInterval {
    pub class_index: usize,
    pub start: usize,
    pub end: usize,
}

impl EventInterval {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false // a constructed interval always covers at least one segment
    }
}

/// Temporal IoU of two inclusive segment intervals.
pub fn interval_iou(a: &EventInterval, b: &EventInterval) -> f64 {
    let inter_start = a.start.max(b.start);
    let inter_end = a.end.min(b.end);
    let intersection = if inter_start > inter_end {
        0
    } else {
        inter_end - inter_start + 1
    };
    let union = a.len() + b.len() - intersection;
    intersection as f64 / union as f64
}

/// Decompose a binary column into its maximal runs of ones.
pub fn extract_events(column: &[f64], class_index: usize) -> Vec<EventInterval> {
    let mut events = Vec::new();
    let mut run_start: Option<usize> = None;
    for (t, &v) in column.iter().enumerate() {
        debug_assert!(v == 0.0 || v == 1.0, "non-binary value {v} in event column");
        if v == 1.0 {
            run_start.get_or_insert(t);
        } else if let Some(start) = run_start.take() {
            events.push(EventInterval {
                class_index,
                start,
                end: t - 1,
            });
        }
    }
    if let Some(start) = run_start {
        events.push(EventInterval {
            class_index,
            start,
            end: column.len() - 1,
        });
    }
    events
}

fn column(m: &Matrix, c: usize) -> Vec<f64> {
    (0..m.rows()).map(|t| m.get(t, c)).collect()
}

/// True/false positive and false negative counts for one video and type.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Tally {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Tally {
    pub fn add(&self, other: &Tally) -> Tally {
        Tally {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
        }
    }

    /// `2TP / (2TP + FP + FN)`; `None` when there is nothing to score.
    pub fn f1(&self) -> Option<f64> {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            None
        } else {
            Some(2.0 * self.tp as f64 / denom as f64)
        }
    }
}

/// Cell-wise comparison over the whole T x C grid.
pub fn segment_tally(pred: &Matrix, gt: &Matrix) -> Tally {
    assert_eq!(
        pred.shape(),
        gt.shape(),
        "segment tally shape mismatch: {:?} vs {:?}",
        pred.shape(),
        gt.shape()
    );
    let mut tally = Tally::default();
    for (p, g) in pred.data().iter().zip(gt.data().iter()) {
        match (*p == 1.0, *g == 1.0) {
            (true, true) => tally.tp += 1,
            (true, false) => tally.fp += 1,
            (false, true) => tally.fn_ += 1,
            (false, false) => {}
        }
    }
    tally
}

pub fn segment_f1(pred: &Matrix, gt: &Matrix) -> Option<f64> {
    segment_tally(pred, gt).f1()
}

/// Greedy interval matching per class: candidate pairs in descending IoU
/// order (ties by earlier gt start, then earlier pred start), each interval
/// used at most once, a match requiring IoU >= `miou_threshold`.
pub fn event_tally(pred: &Matrix, gt: &Matrix, miou_threshold: f64) -> Tally {
    assert_eq!(
        pred.shape(),
        gt.shape(),
        "event tally shape mismatch: {:?} vs {:?}",
        pred.shape(),
        gt.shape()
    );
    assert!(
        miou_threshold > 0.0 && miou_threshold <= 1.0,
        "mIoU threshold must be in (0, 1], got {miou_threshold}"
    );
    let mut tally = Tally::default();
    for c in 0..pred.cols() {
        let pred_events = extract_events(&column(pred, c), c);
        let gt_events = extract_events(&column(gt, c), c);

        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        for (gi, g) in gt_events.iter().enumerate() {
            for (pi, p) in pred_events.iter().enumerate() {
                let iou = interval_iou(p, g);
                if iou >= miou_threshold {
                    candidates.push((iou, gi, pi));
                }
            }
        }
        candidates.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .expect("IoU is never NaN")
                .then_with(|| gt_events[a.1].start.cmp(&gt_events[b.1].start))
                .then_with(|| pred_events[a.2].start.cmp(&pred_events[b.2].start))
        });

        let mut gt_used = vec![false; gt_events.len()];
        let mut pred_used = vec![false; pred_events.len()];
        let mut matches = 0usize;
        for (_, gi, pi) in candidates {
            if !gt_used[gi] && !pred_used[pi] {
                gt_used[gi] = true;
                pred_used[pi] = true;
                matches += 1;
            }
        }
        tally.tp += matches;
        tally.fp += pred_events.len() - matches;
        tally.fn_ += gt_events.len() - matches;
    }
    tally
}

pub fn event_f1(pred: &Matrix, gt: &Matrix, miou_threshold: f64) -> Option<f64> {
    event_tally(pred, gt, miou_threshold).f1()
}

/// Tallies for the three event types at one level.
#[derive(Clone, Copy, Debug, Default)]
pub struct TypedTallies {
    pub audio: Tally,
    pub visual: Tally,
    pub audio_visual: Tally,
}

/// Everything metrics need from one video.
#[derive(Clone, Copy, Debug)]
pub struct VideoEvaluation {
    pub segment: TypedTallies,
    pub event: TypedTallies,
}

/// Score one video from binarized predictions and binary ground truth.
pub fn evaluate_video(
    pred_audio: &Matrix,
    pred_visual: &Matrix,
    gt_audio: &Matrix,
    gt_visual: &Matrix,
    miou_threshold: f64,
) -> VideoEvaluation {
    let pred_av = derive_av(pred_audio, pred_visual);
    let gt_av = derive_av(gt_audio, gt_visual);
    VideoEvaluation {
        segment: TypedTallies {
            audio: segment_tally(pred_audio, gt_audio),
            visual: segment_tally(pred_visual, gt_visual),
            audio_visual: segment_tally(&pred_av, &gt_av),
        },
        event: TypedTallies {
            audio: event_tally(pred_audio, gt_audio, miou_threshold),
            visual: event_tally(pred_visual, gt_visual, miou_threshold),
            audio_visual: event_tally(&pred_av, &gt_av, miou_threshold),
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subset {
    All,
    Overlapping,
    NonOverlapping,
}

impl Subset {
    pub fn as_str(&self) -> &'static str {
        match self {
            Subset::All => "all",
            Subset::Overlapping => "overlapping",
            Subset::NonOverlapping => "non-overlapping",
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LevelScores {
    pub audio: f64,
    pub visual: f64,
    pub audio_visual: f64,
    pub type_at_av: f64,
    pub event_at_av: f64,
}

impl LevelScores {
    /// Mean of the five reported numbers, the summary column used when
    /// comparing decoders.
    pub fn average(&self) -> f64 {
        (self.audio + self.visual + self.audio_visual + self.type_at_av + self.event_at_av) / 5.0
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MetricReport {
    pub subset: Subset,
    pub video_count: usize,
    pub segment: LevelScores,
    pub event: LevelScores,
}

impl MetricReport {
    pub fn to_json(&self) -> serde_json::Value {
        let level = |s: &LevelScores| {
            json!({
                "audio": s.audio,
                "visual": s.visual,
                "audio_visual": s.audio_visual,
                "type_at_av": s.type_at_av,
                "event_at_av": s.event_at_av,
            })
        };
        json!({
            "subset": self.subset.as_str(),
            "video_count": self.video_count,
            "segment_level": level(&self.segment),
            "event_level": level(&self.event),
        })
    }

    /// Canonical JSON: sorted keys, floats at six decimals.
    pub fn to_canonical_json(&self) -> String {
        to_canonical_json(&self.to_json())
    }
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in values.flatten() {
        sum += v;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Aggregate per-video tallies into one report.
///
/// Per-type scores are means over the videos where the type is defined.
/// Event@AV pools each video's audio and visual counts before applying the
/// F formula, then averages. Type@AV is the arithmetic mean of the three
/// per-type scores at its level.
pub fn aggregate(videos: &[VideoEvaluation], subset: Subset) -> MetricReport {
    assert!(!videos.is_empty(), "aggregate requires at least one video");
    let level = |pick: &dyn Fn(&VideoEvaluation) -> TypedTallies| -> LevelScores {
        let audio = mean_defined(videos.iter().map(|v| pick(v).audio.f1()));
        let visual = mean_defined(videos.iter().map(|v| pick(v).visual.f1()));
        let audio_visual = mean_defined(videos.iter().map(|v| pick(v).audio_visual.f1()));
        let event_at_av = mean_defined(
            videos
                .iter()
                .map(|v| pick(v).audio.add(&pick(v).visual).f1()),
        );
        LevelScores {
            audio,
            visual,
            audio_visual,
            type_at_av: (audio + visual + audio_visual) / 3.0,
            event_at_av,
        }
    };
    MetricReport {
        subset,
        video_count: videos.len(),
        segment: level(&|v: &VideoEvaluation| v.segment),
        event: level(&|v: &VideoEvaluation| v.event),
    }
}

/// A video is overlapping when any segment of either modality carries two or
/// more active classes. Returns (overlapping indices, non-overlapping
/// indices); the two lists partition the input.
pub fn split_overlapping(
    ground_truth: &[(EventLabelTensor, EventLabelTensor)],
) -> (Vec<usize>, Vec<usize>) {
    let mut overlapping = Vec::new();
    let mut rest = Vec::new();
    for (idx, (audio, visual)) in ground_truth.iter().enumerate() {
        let busy = |tensor: &EventLabelTensor| {
            (0..tensor.segments()).any(|t| {
                tensor
                    .segment_labels
                    .row(t)
                    .iter()
                    .filter(|&&x| x == 1.0)
                    .count()
                    >= 2
            })
        };
        if busy(audio) || busy(visual) {
            overlapping.push(idx);
        } else {
            rest.push(idx);
        }
    }
    (overlapping, rest)
}
