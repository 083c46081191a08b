//! Central finite-difference verification of reverse-mode gradients.

use crate::matrix::Matrix;
use crate::tape::{NodeId, Tape};

/// Compare analytic gradients of `f` against central differences.
///
/// `f` rebuilds the computation from scratch on the tape it is given, reads
/// its inputs through the provided node ids, and returns a 1x1 loss node.
/// Returns the maximum over all input entries of
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn check_gradients<F>(inputs: &[Matrix], step: f64, f: F) -> f64
where
    F: Fn(&mut Tape, &[NodeId]) -> NodeId,
{
    assert!(
        step > 0.0,
        "finite-difference step must be positive, got {step}"
    );

    let eval = |mats: &[Matrix]| -> f64 {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = mats.iter().map(|m| tape.constant(m.clone())).collect();
        let out = f(&mut tape, &ids);
        tape.scalar_value(out)
    };

    // Analytic pass.
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs.iter().map(|m| tape.variable(m.clone())).collect();
    let out = f(&mut tape, &ids);
    assert_eq!(
        tape.value(out).shape(),
        (1, 1),
        "check_gradients requires a scalar-valued function"
    );
    tape.backward(out);
    let analytic: Vec<Matrix> = ids.iter().map(|&id| tape.gradient(id).clone()).collect();

    let mut worst = 0.0_f64;
    let mut work: Vec<Matrix> = inputs.to_vec();
    for k in 0..inputs.len() {
        for idx in 0..inputs[k].data().len() {
            let original = work[k].data()[idx];
            work[k].data_mut()[idx] = original + step;
            let plus = eval(&work);
            work[k].data_mut()[idx] = original - step;
            let minus = eval(&work);
            work[k].data_mut()[idx] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[k].data()[idx];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_matches_analytic() {
        let mut rng = crate::rng::Rng::from_seed(1);
        let x = Matrix::randn(3, 2, 1.0, &mut rng);
        let err = check_gradients(&[x], 1e-5, |tape, ids| {
            let sq = tape.hadamard(ids[0], ids[0]);
            tape.sum(sq)
        });
        assert!(err < 1e-7, "max rel error {err}");
    }

    #[test]
    fn bce_after_sigmoid_checks_out() {
        let mut rng = crate::rng::Rng::from_seed(2);
        let x = Matrix::randn(2, 3, 1.0, &mut rng);
        let y = Matrix::from_fn(2, 3, |i, j| f64::from((i + j) % 2 == 0));
        let err = check_gradients(&[x], 1e-5, |tape, ids| {
            let p = tape.sigmoid(ids[0]);
            tape.bce_loss(p, &y)
        });
        assert!(err < 1e-5, "max rel error {err}");
    }

    #[test]
    fn constant_function_gives_near_zero_error() {
        let x = Matrix::filled(2, 2, 3.0);
        let err = check_gradients(&[x], 1e-5, |tape, _ids| {
            tape.constant(Matrix::new(1, 1, vec![7.0]))
        });
        assert!(err < 1e-9, "max rel error {err}");
    }

    #[test]
    #[should_panic(expected = "step must be positive")]
    fn rejects_nonpositive_step() {
        let x = Matrix::zeros(1, 1);
        check_gradients(&[x], 0.0, |tape, ids| tape.sum(ids[0]));
    }
}
