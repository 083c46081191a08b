//! Training objective.
//!
//! Three supervision levels feed the basic loss: the weak video-level union
//! label, per-modality video labels derived from the segment labels, and the
//! segment-level (pseudo) labels themselves. On top of that, the similarity
//! regularizer pushes the cosine similarity of encoded audio/visual segment
//! pairs toward the event-set IoU of their labels.
//!
//! The hard thresholded union of the inference path is not differentiable,
//! so the union BCE term trains against a probabilistic union instead
//! (`p_a + p_v - p_a*p_v` for the label-query decoder; the baseline decoder
//! supplies its attentively pooled union probability directly).

use crate::encoder::Modality;
use crate::matrix::Matrix;
use crate::tape::{NodeId, Tape};

/// Per-segment binary event labels for one modality (T x C).
/// A segment row may hold zero, one, or several active classes.
#[derive(Clone, Debug, PartialEq)]
pub struct EventLabelTensor {
    pub modality: Modality,
    pub segment_labels: Matrix,
}

impl EventLabelTensor {
    pub fn new(modality: Modality, segment_labels: Matrix) -> Self {
        for &v in segment_labels.data() {
            assert!(
                v == 0.0 || v == 1.0,
                "event label entry {v} is not in {{0,1}}"
            );
        }
        EventLabelTensor {
            modality,
            segment_labels,
        }
    }

    pub fn segments(&self) -> usize {
        self.segment_labels.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.segment_labels.cols()
    }

    /// Class indices active in segment `t`.
    pub fn active_classes(&self, t: usize) -> Vec<usize> {
        (0..self.num_classes())
            .filter(|&c| self.segment_labels.get(t, c) == 1.0)
            .collect()
    }
}

/// Columnwise OR over segments: 1 x C video-level labels.
pub fn video_labels_from_segments(labels: &EventLabelTensor) -> Matrix {
    let y = &labels.segment_labels;
    Matrix::from_fn(1, y.cols(), |_, c| {
        f64::from((0..y.rows()).any(|t| y.get(t, c) == 1.0))
    })
}

/// Event-set IoU for every audio/visual segment pair: T x T with
/// `r[i][j] = |S_a(i) ∩ S_v(j)| / |S_a(i) ∪ S_v(j)|`.
///
/// Two segments with no events at all count as identical (r = 1): pushing
/// background segments apart would punish the encoder for agreeing that
/// nothing is happening.
pub fn eiou_matrix(audio: &EventLabelTensor, visual: &EventLabelTensor) -> Matrix {
    assert_eq!(
        audio.segments(),
        visual.segments(),
        "segment count mismatch: audio {} vs visual {}",
        audio.segments(),
        visual.segments()
    );
    assert_eq!(
        audio.num_classes(),
        visual.num_classes(),
        "class count mismatch: audio {} vs visual {}",
        audio.num_classes(),
        visual.num_classes()
    );
    let t = audio.segments();
    let c = audio.num_classes();
    Matrix::from_fn(t, t, |i, j| {
        let mut intersection = 0usize;
        let mut union = 0usize;
        for k in 0..c {
            let a = audio.segment_labels.get(i, k) == 1.0;
            let v = visual.segment_labels.get(j, k) == 1.0;
            intersection += usize::from(a && v);
            union += usize::from(a || v);
        }
        if union == 0 {
            1.0
        } else {
            intersection as f64 / union as f64
        }
    })
}

/// Cosine similarity of all audio/visual segment pairs: row-normalize both
/// feature matrices, then multiply. Differentiable; zero rows are floored
/// rather than erroring.
pub fn cosine_matrix(tape: &mut Tape, features_audio: NodeId, features_visual: NodeId) -> NodeId {
    assert_eq!(
        tape.value(features_audio).cols(),
        tape.value(features_visual).cols(),
        "feature width mismatch: {} vs {}",
        tape.value(features_audio).cols(),
        tape.value(features_visual).cols()
    );
    let unit_a = tape.row_l2_normalize(features_audio);
    let unit_v = tape.row_l2_normalize(features_visual);
    let unit_v_t = tape.transpose(unit_v);
    tape.matmul(unit_a, unit_v_t)
}

/// Mean squared discrepancy between the feature similarity matrix and the
/// event-set IoU target. Differentiable through the similarities only.
pub fn avss_loss(tape: &mut Tape, similarity: NodeId, eiou: &Matrix) -> NodeId {
    tape.mse_loss(similarity, eiou)
}

/// Differentiable prediction handles for the loss terms. Segment
/// probabilities are T x C; video and union probabilities 1 x C.
pub struct PredictionNodes {
    pub segment_audio: NodeId,
    pub segment_visual: NodeId,
    pub video_audio: NodeId,
    pub video_visual: NodeId,
    pub union_prob: NodeId,
}

/// Probabilistic OR of two probability nodes: `a + b - a*b`.
pub fn probabilistic_or(tape: &mut Tape, a: NodeId, b: NodeId) -> NodeId {
    let sum = tape.add(a, b);
    let product = tape.hadamard(a, b);
    tape.sub(sum, product)
}

/// Values of the individual BCE terms, for logging.
#[derive(Clone, Copy, Debug, Default)]
pub struct BasicLossBreakdown {
    pub union_bce: f64,
    pub video_bce_audio: f64,
    pub video_bce_visual: f64,
    pub segment_bce_audio: f64,
    pub segment_bce_visual: f64,
}

/// Sum over both modalities of union-video BCE + per-modality video BCE +
/// segment BCE. The union term sits inside the modality sum, so it is
/// counted once per modality.
pub fn basic_loss(
    tape: &mut Tape,
    preds: &PredictionNodes,
    labels_audio: &EventLabelTensor,
    labels_visual: &EventLabelTensor,
    weak_union: &Matrix,
) -> (NodeId, BasicLossBreakdown) {
    let video_target_a = video_labels_from_segments(labels_audio);
    let video_target_v = video_labels_from_segments(labels_visual);

    let union_bce = tape.bce_loss(preds.union_prob, weak_union);
    let video_a = tape.bce_loss(preds.video_audio, &video_target_a);
    let video_v = tape.bce_loss(preds.video_visual, &video_target_v);
    let seg_a = tape.bce_loss(preds.segment_audio, &labels_audio.segment_labels);
    let seg_v = tape.bce_loss(preds.segment_visual, &labels_visual.segment_labels);

    let union_twice = tape.scale(union_bce, 2.0);
    let acc = tape.add(union_twice, video_a);
    let acc = tape.add(acc, video_v);
    let acc = tape.add(acc, seg_a);
    let total = tape.add(acc, seg_v);

    let breakdown = BasicLossBreakdown {
        union_bce: tape.scalar_value(union_bce),
        video_bce_audio: tape.scalar_value(video_a),
        video_bce_visual: tape.scalar_value(video_v),
        segment_bce_audio: tape.scalar_value(seg_a),
        segment_bce_visual: tape.scalar_value(seg_v),
    };
    (total, breakdown)
}

/// Scalar values of one objective evaluation.
#[derive(Clone, Copy, Debug, Default)]
pub struct LossReport {
    pub basic: f64,
    pub avss: f64,
    pub total: f64,
    pub lambda: f64,
    pub breakdown: BasicLossBreakdown,
}

/// Combine the two objectives: `total = basic + lambda * avss`.
pub fn total_loss(
    tape: &mut Tape,
    basic: NodeId,
    avss: NodeId,
    lambda: f64,
    breakdown: BasicLossBreakdown,
) -> (NodeId, LossReport) {
    assert!(lambda >= 0.0, "lambda must be nonnegative, got {lambda}");
    let weighted = tape.scale(avss, lambda);
    let total = tape.add(basic, weighted);
    let report = LossReport {
        basic: tape.scalar_value(basic),
        avss: tape.scalar_value(avss),
        total: tape.scalar_value(total),
        lambda,
        breakdown,
    };
    (total, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn tensor(modality: Modality, rows: &[&[f64]]) -> EventLabelTensor {
        EventLabelTensor::new(
            modality,
            Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()),
        )
    }

    #[test]
    fn video_labels_or_over_segments() {
        let y = tensor(Modality::Audio, &[&[0.0, 0.0, 0.0], &[0.0, 0.0, 1.0]]);
        assert_eq!(
            video_labels_from_segments(&y),
            Matrix::from_rows(&[vec![0.0, 0.0, 1.0]])
        );

        let zero = tensor(Modality::Audio, &[&[0.0, 0.0], &[0.0, 0.0]]);
        assert_eq!(video_labels_from_segments(&zero), Matrix::zeros(1, 2));
    }

    #[test]
    fn video_labels_match_column_max() {
        let mut rng = Rng::from_seed(51);
        let y = EventLabelTensor::new(
            Modality::Visual,
            Matrix::from_fn(6, 5, |_, _| f64::from(rng.chance(0.4))),
        );
        let v = video_labels_from_segments(&y);
        for c in 0..5 {
            let max = (0..6)
                .map(|t| y.segment_labels.get(t, c))
                .fold(0.0, f64::max);
            assert_eq!(v.get(0, c), max);
        }
    }

    #[test]
    fn eiou_worked_example() {
        // Audio segment 0 holds {c1, c2, c3}; visual segment 0 holds {c1},
        // visual segment 1 holds {c1, c2}: r[0][0] = 1/3, r[0][1] = 2/3.
        let audio = tensor(Modality::Audio, &[&[1.0, 1.0, 1.0], &[0.0, 0.0, 0.0]]);
        let visual = tensor(Modality::Visual, &[&[1.0, 0.0, 0.0], &[1.0, 1.0, 0.0]]);
        let r = eiou_matrix(&audio, &visual);
        assert_eq!(r.get(0, 0), 1.0 / 3.0);
        assert_eq!(r.get(0, 1), 2.0 / 3.0);
    }

    #[test]
    fn eiou_extremes() {
        let audio = tensor(Modality::Audio, &[&[1.0, 1.0, 0.0], &[1.0, 0.0, 0.0]]);
        let visual = tensor(Modality::Visual, &[&[1.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        let r = eiou_matrix(&audio, &visual);
        assert_eq!(r.get(0, 0), 1.0); // identical nonempty sets
        assert_eq!(r.get(1, 1), 0.0); // disjoint nonempty sets
    }

    #[test]
    fn eiou_both_empty_is_one() {
        let audio = tensor(Modality::Audio, &[&[0.0, 0.0]]);
        let visual = tensor(Modality::Visual, &[&[0.0, 0.0]]);
        assert_eq!(eiou_matrix(&audio, &visual).get(0, 0), 1.0);
    }

    #[test]
    #[should_panic(expected = "segment count mismatch")]
    fn eiou_rejects_segment_mismatch() {
        let audio = tensor(Modality::Audio, &[&[1.0, 0.0], &[0.0, 1.0]]);
        let visual = tensor(Modality::Visual, &[&[1.0, 0.0]]);
        eiou_matrix(&audio, &visual);
    }

    #[test]
    #[should_panic(expected = "feature width mismatch")]
    fn cosine_rejects_width_mismatch() {
        let mut tape = Tape::new();
        let f_a = tape.constant(Matrix::zeros(2, 3));
        let f_v = tape.constant(Matrix::zeros(2, 4));
        cosine_matrix(&mut tape, f_a, f_v);
    }

    #[test]
    #[should_panic(expected = "not in {0,1}")]
    fn event_labels_must_be_binary() {
        EventLabelTensor::new(Modality::Audio, Matrix::filled(2, 2, 0.5));
    }

    #[test]
    fn eiou_swap_transpose_symmetry() {
        let mut rng = Rng::from_seed(52);
        for _ in 0..20 {
            let t = 1 + rng.below(6) as usize;
            let c = 1 + rng.below(5) as usize;
            let a = EventLabelTensor::new(
                Modality::Audio,
                Matrix::from_fn(t, c, |_, _| f64::from(rng.chance(0.4))),
            );
            let v = EventLabelTensor::new(
                Modality::Visual,
                Matrix::from_fn(t, c, |_, _| f64::from(rng.chance(0.4))),
            );
            let r_av = eiou_matrix(&a, &v);
            let r_va = eiou_matrix(&v, &a);
            assert!(r_av.max_abs_diff(&r_va.transpose()) == 0.0);
        }
    }

    #[test]
    fn cosine_identical_and_orthogonal_rows() {
        let mut tape = Tape::new();
        let f_a = tape.constant(Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 0.0]]));
        let f_v = tape.constant(Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 3.0]]));
        let s = cosine_matrix(&mut tape, f_a, f_v);
        let sv = tape.value(s);
        assert!((sv.get(0, 0) - 1.0).abs() < 1e-9); // same direction
        assert!(sv.get(1, 1).abs() < 1e-12); // orthogonal
        for &x in sv.data() {
            assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&x));
        }
    }

    #[test]
    fn avss_zero_when_equal_one_when_opposite() {
        let r = Matrix::filled(2, 2, 1.0);
        let mut tape = Tape::new();
        let s_eq = tape.constant(r.clone());
        let zero = avss_loss(&mut tape, s_eq, &r);
        assert_eq!(tape.scalar_value(zero), 0.0);

        let s0 = tape.constant(Matrix::zeros(2, 2));
        let one = avss_loss(&mut tape, s0, &r);
        assert_eq!(tape.scalar_value(one), 1.0);
    }

    fn half_prediction_nodes(tape: &mut Tape, t: usize, c: usize) -> PredictionNodes {
        PredictionNodes {
            segment_audio: tape.constant(Matrix::filled(t, c, 0.5)),
            segment_visual: tape.constant(Matrix::filled(t, c, 0.5)),
            video_audio: tape.constant(Matrix::filled(1, c, 0.5)),
            video_visual: tape.constant(Matrix::filled(1, c, 0.5)),
            union_prob: tape.constant(Matrix::filled(1, c, 0.5)),
        }
    }

    #[test]
    fn basic_loss_all_half_is_six_ln_two() {
        let (t, c) = (3, 4);
        let mut rng = Rng::from_seed(53);
        let y_a = EventLabelTensor::new(
            Modality::Audio,
            Matrix::from_fn(t, c, |_, _| f64::from(rng.chance(0.5))),
        );
        let y_v = EventLabelTensor::new(
            Modality::Visual,
            Matrix::from_fn(t, c, |_, _| f64::from(rng.chance(0.5))),
        );
        let weak = {
            let a = video_labels_from_segments(&y_a);
            let v = video_labels_from_segments(&y_v);
            Matrix::from_fn(1, c, |_, j| {
                f64::from(a.get(0, j) == 1.0 || v.get(0, j) == 1.0)
            })
        };
        let mut tape = Tape::new();
        let preds = half_prediction_nodes(&mut tape, t, c);
        let (loss, breakdown) = basic_loss(&mut tape, &preds, &y_a, &y_v, &weak);
        // Each of the six BCE terms (union counted per modality) is ln 2.
        assert!((tape.scalar_value(loss) - 6.0 * 2.0_f64.ln()).abs() < 1e-12);
        assert!((breakdown.union_bce - 2.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn basic_loss_confident_correct_is_tiny() {
        let (t, c) = (2, 3);
        let mut rng = Rng::from_seed(54);
        let y_a = EventLabelTensor::new(
            Modality::Audio,
            Matrix::from_fn(t, c, |_, _| f64::from(rng.chance(0.5))),
        );
        let y_v = EventLabelTensor::new(
            Modality::Visual,
            Matrix::from_fn(t, c, |_, _| f64::from(rng.chance(0.5))),
        );
        let video_a = video_labels_from_segments(&y_a);
        let video_v = video_labels_from_segments(&y_v);
        let weak = Matrix::from_fn(1, c, |_, j| {
            f64::from(video_a.get(0, j) == 1.0 || video_v.get(0, j) == 1.0)
        });
        let confident = |m: &Matrix| m.map(|x| if x == 1.0 { 1.0 - 1e-9 } else { 1e-9 });

        let mut tape = Tape::new();
        let preds = PredictionNodes {
            segment_audio: tape.constant(confident(&y_a.segment_labels)),
            segment_visual: tape.constant(confident(&y_v.segment_labels)),
            video_audio: tape.constant(confident(&video_a)),
            video_visual: tape.constant(confident(&video_v)),
            union_prob: tape.constant(confident(&weak)),
        };
        let (loss, _) = basic_loss(&mut tape, &preds, &y_a, &y_v, &weak);
        assert!(tape.scalar_value(loss) < 1e-5);
    }

    #[test]
    fn total_loss_decomposition() {
        let mut tape = Tape::new();
        let basic = tape.constant(Matrix::new(1, 1, vec![0.4]));
        let avss = tape.constant(Matrix::new(1, 1, vec![0.1]));

        let (_, r0) = total_loss(&mut tape, basic, avss, 0.0, BasicLossBreakdown::default());
        assert_eq!(r0.total, 0.4);

        let (_, r1) = total_loss(&mut tape, basic, avss, 1.0, BasicLossBreakdown::default());
        assert!((r1.total - 0.5).abs() < 1e-15);

        let (_, r2) = total_loss(&mut tape, basic, avss, 2.0, BasicLossBreakdown::default());
        assert!((r2.total - (r2.basic + 2.0 * r2.avss)).abs() < 1e-12);
    }

    #[test]
    #[should_panic(expected = "lambda must be nonnegative")]
    fn negative_lambda_panics() {
        let mut tape = Tape::new();
        let basic = tape.constant(Matrix::new(1, 1, vec![0.4]));
        let avss = tape.constant(Matrix::new(1, 1, vec![0.1]));
        total_loss(&mut tape, basic, avss, -1.0, BasicLossBreakdown::default());
    }

    #[test]
    fn avss_descent_on_free_features() {
        // Minimizing the similarity loss alone over free feature matrices
        // drives mse(s, r) monotonically downward over the first 50 steps.
        let (t, d) = (6, 8);
        let mut rng = Rng::from_seed(55);
        let mut f_a = Matrix::randn(t, d, 1.0, &mut rng);
        let mut f_v = Matrix::randn(t, d, 1.0, &mut rng);
        let target = Matrix::from_fn(t, t, |_, _| rng.uniform());

        let mut adam = crate::adam::AdamState::new(0.01, &[f_a.clone(), f_v.clone()]);
        let mut previous = f64::INFINITY;
        for step in 0..50 {
            let mut tape = Tape::new();
            let a = tape.variable(f_a.clone());
            let v = tape.variable(f_v.clone());
            let s = cosine_matrix(&mut tape, a, v);
            let loss = avss_loss(&mut tape, s, &target);
            let value = tape.scalar_value(loss);
            assert!(
                value < previous,
                "step {step}: {value} did not decrease from {previous}"
            );
            previous = value;
            tape.backward(loss);
            let grads = vec![tape.gradient(a).clone(), tape.gradient(v).clone()];
            adam.step(&mut [&mut f_a, &mut f_v], &grads);
        }
    }

    #[test]
    fn probabilistic_or_matches_formula() {
        let mut tape = Tape::new();
        let a = tape.constant(Matrix::from_rows(&[vec![0.3, 0.9]]));
        let b = tape.constant(Matrix::from_rows(&[vec![0.5, 0.2]]));
        let or = probabilistic_or(&mut tape, a, b);
        let v = tape.value(or);
        assert!((v.get(0, 0) - (0.3 + 0.5 - 0.15)).abs() < 1e-15);
        assert!((v.get(0, 1) - (0.9 + 0.2 - 0.18)).abs() < 1e-15);
    }
}
