//! Synthetic paired audio/visual data with known event structure, plus the
//! JSONL file format that doubles as the loader contract for externally
//! produced features.
//!
//! Each class gets one fixed unit-norm prototype per modality. A segment's
//! feature is the sum of the prototypes of its active classes plus Gaussian
//! noise (background segments are noise only), so overlapping events are
//! genuinely superposed in feature space. Event extents are contiguous runs;
//! the overlap probability controls how often a new event is forced to share
//! segments (and a modality) with an earlier one.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::Modality;
use crate::loss::EventLabelTensor;
use crate::matrix::Matrix;
use crate::metrics::split_overlapping;
use crate::rng::Rng;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("{path}: line {line}: {message}")]
    BadRecord {
        path: String,
        line: usize,
        message: String,
    },
    #[error("dataset inconsistency: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub num_classes: usize,
    pub segments: usize,
    pub d_in_audio: usize,
    pub d_in_visual: usize,
    pub train_videos: usize,
    pub val_videos: usize,
    pub test_videos: usize,
    /// Inclusive bounds on events per video; classes never repeat in a video.
    pub min_events: usize,
    pub max_events: usize,
    /// Chance a new event is placed over segments an earlier event occupies,
    /// sharing at least one modality with it.
    pub overlap_prob: f64,
    /// Chance an event appears in both modalities rather than one.
    pub agreement_prob: f64,
    /// Per-entry std of the additive feature noise (prototypes have norm 1).
    pub feature_sigma: f64,
    /// Chance each pseudo-label bit is flipped away from the ground truth.
    pub flip_prob: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            num_classes: 8,
            segments: 10,
            d_in_audio: 16,
            d_in_visual: 24,
            train_videos: 500,
            val_videos: 100,
            test_videos: 200,
            min_events: 1,
            max_events: 3,
            overlap_prob: 0.3,
            agreement_prob: 0.6,
            feature_sigma: 0.1,
            flip_prob: 0.0,
            seed: 1,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let fail = |m: String| Err(DataError::InvalidConfig(m));
        if self.num_classes < 2 {
            return fail(format!(
                "num_classes must be >= 2, got {}",
                self.num_classes
            ));
        }
        if self.segments < 2 {
            return fail(format!("segments must be >= 2, got {}", self.segments));
        }
        if self.d_in_audio == 0 || self.d_in_visual == 0 {
            return fail("feature widths must be positive".into());
        }
        if self.min_events < 1 || self.min_events > self.max_events {
            return fail(format!(
                "event bounds must satisfy 1 <= min <= max, got [{}, {}]",
                self.min_events, self.max_events
            ));
        }
        if self.max_events > self.num_classes {
            return fail(format!(
                "max_events {} exceeds num_classes {}",
                self.max_events, self.num_classes
            ));
        }
        for (name, p) in [
            ("overlap_prob", self.overlap_prob),
            ("agreement_prob", self.agreement_prob),
            ("flip_prob", self.flip_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        if self.feature_sigma < 0.0 {
            return fail(format!(
                "feature_sigma must be >= 0, got {}",
                self.feature_sigma
            ));
        }
        if self.train_videos == 0 || self.val_videos == 0 || self.test_videos == 0 {
            return fail("every split needs at least one video".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct VideoRecord {
    pub id: String,
    pub audio: Matrix,
    pub visual: Matrix,
    pub gt_audio: EventLabelTensor,
    pub gt_visual: EventLabelTensor,
    pub pseudo_audio: EventLabelTensor,
    pub pseudo_visual: EventLabelTensor,
    /// 1 x C weak video-level union label.
    pub weak: Matrix,
}

#[derive(Serialize, Deserialize)]
struct RecordWire {
    id: String,
    audio: Vec<Vec<f64>>,
    visual: Vec<Vec<f64>>,
    gt_audio: Vec<Vec<u8>>,
    gt_visual: Vec<Vec<u8>>,
    pseudo_audio: Vec<Vec<u8>>,
    pseudo_visual: Vec<Vec<u8>>,
    weak: Vec<u8>,
}

impl From<&VideoRecord> for RecordWire {
    fn from(r: &VideoRecord) -> Self {
        let bits = |m: &Matrix| -> Vec<Vec<u8>> {
            (0..m.rows())
                .map(|i| m.row(i).iter().map(|&x| x as u8).collect())
                .collect()
        };
        RecordWire {
            id: r.id.clone(),
            audio: r.audio.to_nested(),
            visual: r.visual.to_nested(),
            gt_audio: bits(&r.gt_audio.segment_labels),
            gt_visual: bits(&r.gt_visual.segment_labels),
            pseudo_audio: bits(&r.pseudo_audio.segment_labels),
            pseudo_visual: bits(&r.pseudo_visual.segment_labels),
            weak: r.weak.row(0).iter().map(|&x| x as u8).collect(),
        }
    }
}

fn label_matrix(rows: &[Vec<u8>], what: &str) -> Result<Matrix, String> {
    if rows.is_empty() {
        return Err(format!("{what} is empty"));
    }
    let cols = rows[0].len();
    let mut data = Vec::with_capacity(rows.len() * cols);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return Err(format!(
                "{what} row {i} has {} cols, expected {cols}",
                row.len()
            ));
        }
        for &b in row {
            if b > 1 {
                return Err(format!("{what} entry {b} is not 0/1"));
            }
            data.push(f64::from(b));
        }
    }
    Ok(Matrix::new(rows.len(), cols, data))
}

impl RecordWire {
    fn into_record(self) -> Result<VideoRecord, String> {
        let audio = Matrix::from_rows(&self.audio);
        let visual = Matrix::from_rows(&self.visual);
        let gt_audio = label_matrix(&self.gt_audio, "gt_audio")?;
        let gt_visual = label_matrix(&self.gt_visual, "gt_visual")?;
        let pseudo_audio = label_matrix(&self.pseudo_audio, "pseudo_audio")?;
        let pseudo_visual = label_matrix(&self.pseudo_visual, "pseudo_visual")?;
        let t = audio.rows();
        for (name, m) in [
            ("visual", &visual),
            ("gt_audio", &gt_audio),
            ("gt_visual", &gt_visual),
            ("pseudo_audio", &pseudo_audio),
            ("pseudo_visual", &pseudo_visual),
        ] {
            if m.rows() != t {
                return Err(format!("{name} has {} segments, audio has {t}", m.rows()));
            }
        }
        let c = gt_audio.cols();
        if gt_visual.cols() != c || pseudo_audio.cols() != c || pseudo_visual.cols() != c {
            return Err("label tensors disagree on class count".into());
        }
        if self.weak.len() != c {
            return Err(format!(
                "weak label has {} classes, expected {c}",
                self.weak.len()
            ));
        }
        let weak = Matrix::new(1, c, self.weak.iter().map(|&b| f64::from(b)).collect());
        Ok(VideoRecord {
            id: self.id,
            audio,
            visual,
            gt_audio: EventLabelTensor::new(Modality::Audio, gt_audio),
            gt_visual: EventLabelTensor::new(Modality::Visual, gt_visual),
            pseudo_audio: EventLabelTensor::new(Modality::Audio, pseudo_audio),
            pseudo_visual: EventLabelTensor::new(Modality::Visual, pseudo_visual),
            weak,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub train: Vec<VideoRecord>,
    pub val: Vec<VideoRecord>,
    pub test: Vec<VideoRecord>,
}

impl Dataset {
    pub fn split(&self, name: &str) -> Option<&[VideoRecord]> {
        match name {
            "train" => Some(&self.train),
            "val" => Some(&self.val),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

/// Per-class unit-norm prototype vectors, one set per modality.
#[derive(Clone, Debug)]
pub struct Prototypes {
    pub audio: Matrix,
    pub visual: Matrix,
}

fn unit_rows(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for i in 0..rows {
        let row: Vec<f64> = (0..cols).map(|_| rng.normal()).collect();
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (j, x) in row.iter().enumerate() {
            m.set(i, j, x / norm);
        }
    }
    m
}

pub fn class_prototypes(config: &DatasetConfig) -> Prototypes {
    let mut rng = Rng::derive(config.seed, "prototypes");
    Prototypes {
        audio: unit_rows(config.num_classes, config.d_in_audio, &mut rng),
        visual: unit_rows(config.num_classes, config.d_in_visual, &mut rng),
    }
}

struct PlacedEvent {
    class: usize,
    start: usize,
    end: usize,
    in_audio: bool,
    in_visual: bool,
}

fn draw_length(rng: &mut Rng, segments: usize) -> usize {
    let hi = (segments / 2).max(2).min(segments);
    let lo = 2.min(segments);
    rng.range_inclusive(lo as u64, hi as u64) as usize
}

fn place_events(config: &DatasetConfig, rng: &mut Rng) -> Vec<PlacedEvent> {
    let t = config.segments;
    let n_events = rng.range_inclusive(config.min_events as u64, config.max_events as u64) as usize;
    let mut classes: Vec<usize> = (0..config.num_classes).collect();
    rng.shuffle(&mut classes);
    classes.truncate(n_events);

    let mut events: Vec<PlacedEvent> = Vec::with_capacity(n_events);
    for (k, &class) in classes.iter().enumerate() {
        let event = if k > 0 && rng.chance(config.overlap_prob) {
            // Overlap an earlier event: the extent must include one of its
            // segments and the modalities must intersect, so some segment
            // of some modality really holds two classes.
            let anchor = &events[rng.below(k as u64) as usize];
            let pivot = rng.range_inclusive(anchor.start as u64, anchor.end as u64) as usize;
            let len = draw_length(rng, t);
            let lo = (pivot + 1).saturating_sub(len);
            let hi = pivot.min(t - len);
            let start = rng.range_inclusive(lo as u64, hi as u64) as usize;
            let (in_audio, in_visual) = if rng.chance(config.agreement_prob) {
                (true, true)
            } else {
                match (anchor.in_audio, anchor.in_visual) {
                    (true, true) => {
                        if rng.chance(0.5) {
                            (true, false)
                        } else {
                            (false, true)
                        }
                    }
                    mods => mods,
                }
            };
            PlacedEvent {
                class,
                start,
                end: start + len - 1,
                in_audio,
                in_visual,
            }
        } else {
            let (in_audio, in_visual) = if rng.chance(config.agreement_prob) {
                (true, true)
            } else if rng.chance(0.5) {
                (true, false)
            } else {
                (false, true)
            };
            let mut occupied = vec![false; t];
            for e in &events {
                for slot in occupied.iter_mut().take(e.end + 1).skip(e.start) {
                    *slot = true;
                }
            }
            let mut free_runs: Vec<(usize, usize)> = Vec::new();
            let mut run_start: Option<usize> = None;
            for (i, &occ) in occupied.iter().enumerate() {
                if !occ {
                    run_start.get_or_insert(i);
                } else if let Some(s) = run_start.take() {
                    free_runs.push((s, i - 1));
                }
            }
            if let Some(s) = run_start {
                free_runs.push((s, t - 1));
            }
            let want = draw_length(rng, t);
            let fitting: Vec<(usize, usize)> = free_runs
                .iter()
                .copied()
                .filter(|(s, e)| e - s + 1 >= want)
                .collect();
            let (start, len) = if !fitting.is_empty() {
                let (s, e) = fitting[rng.below(fitting.len() as u64) as usize];
                (
                    rng.range_inclusive(s as u64, (e + 1 - want) as u64) as usize,
                    want,
                )
            } else if let Some(&(s, e)) = free_runs.iter().max_by_key(|(s, e)| e - s) {
                // No run fits the drawn length: shrink into the widest gap.
                (s, e - s + 1)
            } else {
                // Nothing free: place anywhere.
                (rng.range_inclusive(0, (t - want) as u64) as usize, want)
            };
            PlacedEvent {
                class,
                start,
                end: start + len - 1,
                in_audio,
                in_visual,
            }
        };
        events.push(event);
    }
    events
}

fn generate_video(
    config: &DatasetConfig,
    prototypes: &Prototypes,
    id: String,
    rng: &mut Rng,
) -> VideoRecord {
    let t = config.segments;
    let c = config.num_classes;
    let events = place_events(config, rng);

    let mut gt_audio = Matrix::zeros(t, c);
    let mut gt_visual = Matrix::zeros(t, c);
    for e in &events {
        for seg in e.start..=e.end {
            if e.in_audio {
                gt_audio.set(seg, e.class, 1.0);
            }
            if e.in_visual {
                gt_visual.set(seg, e.class, 1.0);
            }
        }
    }

    let mut features = |gt: &Matrix, protos: &Matrix, width: usize| -> Matrix {
        let mut m = Matrix::zeros(t, width);
        for seg in 0..t {
            for class in 0..c {
                if gt.get(seg, class) == 1.0 {
                    for j in 0..width {
                        m.set(seg, j, m.get(seg, j) + protos.get(class, j));
                    }
                }
            }
            for j in 0..width {
                m.set(seg, j, m.get(seg, j) + config.feature_sigma * rng.normal());
            }
        }
        m
    };
    let audio = features(&gt_audio, &prototypes.audio, config.d_in_audio);
    let visual = features(&gt_visual, &prototypes.visual, config.d_in_visual);

    let mut flip = |gt: &Matrix| -> Matrix {
        gt.map(|x| {
            if config.flip_prob > 0.0 && rng.chance(config.flip_prob) {
                1.0 - x
            } else {
                x
            }
        })
    };
    let pseudo_audio = flip(&gt_audio);
    let pseudo_visual = flip(&gt_visual);

    let weak = Matrix::from_fn(1, c, |_, class| {
        f64::from(
            (0..t).any(|seg| gt_audio.get(seg, class) == 1.0 || gt_visual.get(seg, class) == 1.0),
        )
    });

    VideoRecord {
        id,
        audio,
        visual,
        gt_audio: EventLabelTensor::new(Modality::Audio, gt_audio),
        gt_visual: EventLabelTensor::new(Modality::Visual, gt_visual),
        pseudo_audio: EventLabelTensor::new(Modality::Audio, pseudo_audio),
        pseudo_visual: EventLabelTensor::new(Modality::Visual, pseudo_visual),
        weak,
    }
}

pub fn generate_dataset(config: &DatasetConfig) -> Result<Dataset, DataError> {
    config.validate()?;
    let prototypes = class_prototypes(config);
    let make_split = |name: &str, count: usize| -> Vec<VideoRecord> {
        let mut rng = Rng::derive(config.seed, name);
        (0..count)
            .map(|i| generate_video(config, &prototypes, format!("{name}_{i:04}"), &mut rng))
            .collect()
    };
    Ok(Dataset {
        config: config.clone(),
        train: make_split("train", config.train_videos),
        val: make_split("val", config.val_videos),
        test: make_split("test", config.test_videos),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SplitStats {
    pub videos: usize,
    pub overlapping_fraction: f64,
    /// Per-class count of merged event intervals, both modalities pooled.
    pub class_frequency: Vec<usize>,
    /// Mean number of active classes per (segment, modality) cell.
    pub mean_events_per_segment: f64,
}

pub fn dataset_stats(videos: &[VideoRecord]) -> SplitStats {
    assert!(!videos.is_empty(), "stats over an empty split");
    let c = videos[0].gt_audio.num_classes();
    let gt_pairs: Vec<(EventLabelTensor, EventLabelTensor)> = videos
        .iter()
        .map(|v| (v.gt_audio.clone(), v.gt_visual.clone()))
        .collect();
    let (overlapping, _) = split_overlapping(&gt_pairs);

    let mut class_frequency = vec![0usize; c];
    let mut active_cells = 0usize;
    let mut total_cells = 0usize;
    for v in videos {
        for tensor in [&v.gt_audio, &v.gt_visual] {
            let m = &tensor.segment_labels;
            for class in 0..c {
                let col: Vec<f64> = (0..m.rows()).map(|i| m.get(i, class)).collect();
                class_frequency[class] += crate::metrics::extract_events(&col, class).len();
            }
            active_cells += m.data().iter().filter(|&&x| x == 1.0).count();
            total_cells += m.rows();
        }
    }
    SplitStats {
        videos: videos.len(),
        overlapping_fraction: overlapping.len() as f64 / videos.len() as f64,
        class_frequency,
        mean_events_per_segment: active_cells as f64 / total_cells as f64,
    }
}

// ── File format ──────────────────────────────────────────────────────

/// Dataset directory layout: `header.json` with the config, plus one JSONL
/// file per split (`train.jsonl`, `val.jsonl`, `test.jsonl`), one record per
/// line, floats at full precision.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<(), DataError> {
    std::fs::create_dir_all(dir)?;
    let header = serde_json::to_string_pretty(&dataset.config)?;
    std::fs::write(dir.join("header.json"), header)?;
    for (name, videos) in [
        ("train", &dataset.train),
        ("val", &dataset.val),
        ("test", &dataset.test),
    ] {
        let mut file = std::fs::File::create(dir.join(format!("{name}.jsonl")))?;
        for record in videos.iter() {
            let wire = RecordWire::from(record);
            serde_json::to_writer(&mut file, &wire)?;
            file.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, DataError> {
    let header = std::fs::read_to_string(dir.join("header.json"))?;
    let config: DatasetConfig = serde_json::from_str(&header)?;
    let load_split = |name: &str| -> Result<Vec<VideoRecord>, DataError> {
        let path = dir.join(format!("{name}.jsonl"));
        let file = std::fs::File::open(&path)?;
        let mut videos = Vec::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let wire: RecordWire =
                serde_json::from_str(&line).map_err(|e| DataError::BadRecord {
                    path: path.display().to_string(),
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            let record = wire.into_record().map_err(|message| DataError::BadRecord {
                path: path.display().to_string(),
                line: idx + 1,
                message,
            })?;
            videos.push(record);
        }
        Ok(videos)
    };
    let dataset = Dataset {
        train: load_split("train")?,
        val: load_split("val")?,
        test: load_split("test")?,
        config,
    };
    check_consistency(&dataset)?;
    Ok(dataset)
}

fn check_consistency(dataset: &Dataset) -> Result<(), DataError> {
    for (name, videos) in [
        ("train", &dataset.train),
        ("val", &dataset.val),
        ("test", &dataset.test),
    ] {
        if videos.is_empty() {
            return Err(DataError::Inconsistent(format!("split {name} is empty")));
        }
        for v in videos {
            if v.audio.cols() != dataset.config.d_in_audio
                || v.visual.cols() != dataset.config.d_in_visual
            {
                return Err(DataError::Inconsistent(format!(
                    "video {}: feature widths {}x{} do not match header ({}, {})",
                    v.id,
                    v.audio.cols(),
                    v.visual.cols(),
                    dataset.config.d_in_audio,
                    dataset.config.d_in_visual
                )));
            }
            if v.gt_audio.num_classes() != dataset.config.num_classes {
                return Err(DataError::Inconsistent(format!(
                    "video {}: {} classes, header says {}",
                    v.id,
                    v.gt_audio.num_classes(),
                    dataset.config.num_classes
                )));
            }
            if v.audio.rows() != dataset.config.segments {
                return Err(DataError::Inconsistent(format!(
                    "video {}: {} segments, header says {}",
                    v.id,
                    v.audio.rows(),
                    dataset.config.segments
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> DatasetConfig {
        DatasetConfig {
            train_videos: 8,
            val_videos: 3,
            test_videos: 3,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let config = tiny_config();
        let a = generate_dataset(&config).unwrap();
        let b = generate_dataset(&config).unwrap();
        for (x, y) in a.train.iter().zip(b.train.iter()) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.audio, y.audio);
            assert_eq!(x.gt_audio, y.gt_audio);
        }
        let other = generate_dataset(&DatasetConfig { seed: 2, ..config }).unwrap();
        assert_ne!(a.train[0].audio, other.train[0].audio);
    }

    #[test]
    fn weak_label_is_or_of_ground_truth() {
        let dataset = generate_dataset(&tiny_config()).unwrap();
        for v in dataset
            .train
            .iter()
            .chain(&dataset.val)
            .chain(&dataset.test)
        {
            let c = v.weak.cols();
            for class in 0..c {
                let any = (0..v.gt_audio.segments()).any(|t| {
                    v.gt_audio.segment_labels.get(t, class) == 1.0
                        || v.gt_visual.segment_labels.get(t, class) == 1.0
                });
                assert_eq!(v.weak.get(0, class) == 1.0, any, "video {}", v.id);
            }
        }
    }

    #[test]
    fn zero_flip_means_pseudo_equals_gt() {
        let dataset = generate_dataset(&tiny_config()).unwrap();
        for v in &dataset.train {
            assert_eq!(v.pseudo_audio.segment_labels, v.gt_audio.segment_labels);
            assert_eq!(v.pseudo_visual.segment_labels, v.gt_visual.segment_labels);
        }
    }

    #[test]
    fn flip_probability_perturbs_pseudo_labels() {
        let config = DatasetConfig {
            flip_prob: 0.5,
            ..tiny_config()
        };
        let dataset = generate_dataset(&config).unwrap();
        let differs = dataset
            .train
            .iter()
            .any(|v| v.pseudo_audio.segment_labels != v.gt_audio.segment_labels);
        assert!(differs);
    }

    #[test]
    fn sigma_zero_single_event_features_equal_prototype() {
        let config = DatasetConfig {
            feature_sigma: 0.0,
            min_events: 1,
            max_events: 1,
            agreement_prob: 0.0,
            train_videos: 10,
            val_videos: 1,
            test_videos: 1,
            ..DatasetConfig::default()
        };
        let dataset = generate_dataset(&config).unwrap();
        let protos = class_prototypes(&config);
        let mut saw_audio_event = false;
        for v in &dataset.train {
            for t in 0..config.segments {
                let active = v.gt_audio.active_classes(t);
                if let [class] = active[..] {
                    saw_audio_event = true;
                    for j in 0..config.d_in_audio {
                        assert_eq!(v.audio.get(t, j), protos.audio.get(class, j));
                    }
                } else if active.is_empty() {
                    assert!(v.audio.row(t).iter().all(|&x| x == 0.0));
                }
            }
        }
        assert!(saw_audio_event);
    }

    #[test]
    fn nearest_prototype_classifies_clean_single_events() {
        let config = DatasetConfig {
            feature_sigma: 0.0,
            min_events: 1,
            max_events: 1,
            overlap_prob: 0.0,
            train_videos: 20,
            val_videos: 1,
            test_videos: 1,
            ..DatasetConfig::default()
        };
        let dataset = generate_dataset(&config).unwrap();
        let protos = class_prototypes(&config);
        for v in &dataset.train {
            for t in 0..config.segments {
                if let [class] = v.gt_audio.active_classes(t)[..] {
                    let feat = v.audio.row(t);
                    let nearest = (0..config.num_classes)
                        .min_by(|&a, &b| {
                            let da: f64 = feat
                                .iter()
                                .zip(protos.audio.row(a))
                                .map(|(x, p)| (x - p) * (x - p))
                                .sum();
                            let db: f64 = feat
                                .iter()
                                .zip(protos.audio.row(b))
                                .map(|(x, p)| (x - p) * (x - p))
                                .sum();
                            da.partial_cmp(&db).unwrap()
                        })
                        .unwrap();
                    assert_eq!(nearest, class);
                }
            }
        }
    }

    #[test]
    fn overlap_extremes_show_in_stats() {
        let none = DatasetConfig {
            overlap_prob: 0.0,
            min_events: 1,
            max_events: 1,
            ..tiny_config()
        };
        let stats = dataset_stats(&generate_dataset(&none).unwrap().train);
        assert_eq!(stats.overlapping_fraction, 0.0);

        let heavy = DatasetConfig {
            overlap_prob: 1.0,
            min_events: 2,
            max_events: 3,
            train_videos: 30,
            ..tiny_config()
        };
        let stats = dataset_stats(&generate_dataset(&heavy).unwrap().train);
        assert_eq!(stats.overlapping_fraction, 1.0);
    }

    #[test]
    fn class_frequencies_sum_to_interval_count() {
        let dataset = generate_dataset(&tiny_config()).unwrap();
        let stats = dataset_stats(&dataset.train);
        let mut total = 0usize;
        for v in &dataset.train {
            for tensor in [&v.gt_audio, &v.gt_visual] {
                for class in 0..tensor.num_classes() {
                    let col: Vec<f64> = (0..tensor.segments())
                        .map(|t| tensor.segment_labels.get(t, class))
                        .collect();
                    total += crate::metrics::extract_events(&col, class).len();
                }
            }
        }
        assert_eq!(stats.class_frequency.iter().sum::<usize>(), total);
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = std::env::temp_dir().join(format!("avvp-data-{}", std::process::id()));
        let dataset = generate_dataset(&tiny_config()).unwrap();
        save_dataset(&dataset, &dir).unwrap();
        let loaded = load_dataset(&dir).unwrap();
        assert_eq!(loaded.config, dataset.config);
        assert_eq!(loaded.train.len(), dataset.train.len());
        for (a, b) in dataset.train.iter().zip(loaded.train.iter()) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.audio, b.audio);
            assert_eq!(a.visual, b.visual);
            assert_eq!(a.gt_audio, b.gt_audio);
            assert_eq!(a.weak, b.weak);
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn corrupt_record_reports_file_and_line() {
        let dir = std::env::temp_dir().join(format!("avvp-bad-{}", std::process::id()));
        let dataset = generate_dataset(&tiny_config()).unwrap();
        save_dataset(&dataset, &dir).unwrap();

        // non-binary label entry on line 2
        let path = dir.join("val.jsonl");
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        lines[1] = lines[1].replace("\"gt_audio\":[[", "\"gt_audio\":[[7,");
        std::fs::write(&path, lines.join("\n")).unwrap();

        match load_dataset(&dir) {
            Err(DataError::BadRecord { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(
                    message.contains("not 0/1") || message.contains("expected"),
                    "{message}"
                );
            }
            other => panic!("expected BadRecord, got {other:?}"),
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = DatasetConfig {
            num_classes: 1,
            ..DatasetConfig::default()
        };
        assert!(matches!(bad.validate(), Err(DataError::InvalidConfig(_))));
        let bad = DatasetConfig {
            overlap_prob: 1.5,
            ..DatasetConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = DatasetConfig {
            min_events: 4,
            max_events: 2,
            ..DatasetConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
