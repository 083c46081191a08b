//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! Operations are recorded on a tape in construction order, which is already
//! a topological order because an op can only reference earlier node ids.
//! `backward` walks the tape once in reverse, so a node feeding several
//! consumers accumulates every contribution. Values are immutable once
//! produced; a tape lives for one forward/backward cycle.

use crate::matrix::Matrix;

pub type NodeId = usize;

/// Probabilities are clamped to [BCE_EPS, 1 - BCE_EPS] before logs.
pub const BCE_EPS: f64 = 1e-7;
/// Variance floor inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;
/// Norm floor for row L2 normalization (all-zero rows stay near zero).
pub const ROW_NORM_EPS: f64 = 1e-12;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul {
        a: NodeId,
        b: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Sub {
        a: NodeId,
        b: NodeId,
    },
    Hadamard {
        a: NodeId,
        b: NodeId,
    },
    /// Broadcast-add a 1xC row vector to every row of an RxC matrix.
    AddRow {
        a: NodeId,
        row: NodeId,
    },
    /// Elementwise mul*x + add (the shift is constant, so backward only
    /// needs the factor).
    Affine {
        a: NodeId,
        mul: f64,
    },
    Transpose {
        a: NodeId,
    },
    Sigmoid {
        a: NodeId,
    },
    Relu {
        a: NodeId,
    },
    SoftmaxRows {
        a: NodeId,
    },
    LayerNorm {
        a: NodeId,
        gain: NodeId,
        bias: NodeId,
    },
    RowL2Normalize {
        a: NodeId,
    },
    SumAll {
        a: NodeId,
    },
    /// Row sums: RxC -> Rx1.
    SumRows {
        a: NodeId,
    },
    Bce {
        p: NodeId,
        targets: Matrix,
    },
    Mse {
        a: NodeId,
        reference: Matrix,
    },
}

struct Node {
    value: Matrix,
    gradient: Matrix,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Insert a constant leaf (no gradient tracked).
    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Insert a trainable leaf.
    pub fn variable(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id].value
    }

    pub fn gradient(&self, id: NodeId) -> &Matrix {
        &self.nodes[id].gradient
    }

    /// Convenience for 1x1 nodes.
    pub fn scalar_value(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        assert_eq!(
            v.shape(),
            (1, 1),
            "scalar_value on {}x{} node",
            v.rows(),
            v.cols()
        );
        v.get(0, 0)
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> NodeId {
        let gradient = Matrix::zeros(value.rows(), value.cols());
        self.nodes.push(Node {
            value,
            gradient,
            op,
            requires_grad,
        });
        self.nodes.len() - 1
    }

    fn push_op(&mut self, value: Matrix, op: Op) -> NodeId {
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::MatMul { a, b }
            | Op::Add { a, b }
            | Op::Sub { a, b }
            | Op::Hadamard { a, b }
            | Op::AddRow { a, row: b } => {
                self.nodes[*a].requires_grad || self.nodes[*b].requires_grad
            }
            Op::LayerNorm { a, gain, bias } => {
                self.nodes[*a].requires_grad
                    || self.nodes[*gain].requires_grad
                    || self.nodes[*bias].requires_grad
            }
            Op::Affine { a, .. }
            | Op::Transpose { a }
            | Op::Sigmoid { a }
            | Op::Relu { a }
            | Op::SoftmaxRows { a }
            | Op::RowL2Normalize { a }
            | Op::SumAll { a }
            | Op::SumRows { a }
            | Op::Bce { p: a, .. }
            | Op::Mse { a, .. } => self.nodes[*a].requires_grad,
        };
        self.push(value, op, requires_grad)
    }

    // ── Forward ops ──────────────────────────────────────────────────

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).matmul(self.value(b));
        self.push_op(value, Op::MatMul { a, b })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).add(self.value(b));
        self.push_op(value, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).sub(self.value(b));
        self.push_op(value, Op::Sub { a, b })
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).hadamard(self.value(b));
        self.push_op(value, Op::Hadamard { a, b })
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let (rv, cv) = self.value(row).shape();
        assert_eq!(
            rv, 1,
            "add_row expects a 1x{} row vector, got {rv}x{cv}",
            cv
        );
        assert_eq!(
            self.value(a).cols(),
            cv,
            "add_row width mismatch: {}x{} vs 1x{}",
            self.value(a).rows(),
            self.value(a).cols(),
            cv
        );
        let row_vals = self.value(row).clone();
        let value = {
            let a_val = self.value(a);
            Matrix::from_fn(a_val.rows(), a_val.cols(), |i, j| {
                a_val.get(i, j) + row_vals.get(0, j)
            })
        };
        self.push_op(value, Op::AddRow { a, row })
    }

    pub fn affine(&mut self, a: NodeId, mul: f64, add: f64) -> NodeId {
        let value = self.value(a).map(|x| mul * x + add);
        self.push_op(value, Op::Affine { a, mul })
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.affine(a, c, 0.0)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).transpose();
        self.push_op(value, Op::Transpose { a })
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(sigmoid_scalar);
        self.push_op(value, Op::Sigmoid { a })
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(|x| x.max(0.0));
        self.push_op(value, Op::Relu { a })
    }

    /// Row-wise softmax, stabilized by subtracting each row's maximum.
    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let value = softmax_rows_value(self.value(a));
        self.push_op(value, Op::SoftmaxRows { a })
    }

    /// Per-row standardization followed by elementwise gain/bias.
    ///
    /// A zero-variance row standardizes to zeros (the centered values are
    /// already zero and the denominator is floored by [`LAYER_NORM_EPS`]).
    pub fn layer_norm(&mut self, a: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let cols = self.value(a).cols();
        for (name, id) in [("gain", gain), ("bias", bias)] {
            let (r, c) = self.value(id).shape();
            assert_eq!(
                (r, c),
                (1, cols),
                "layer_norm {name} shape mismatch: expected 1x{cols}, got {r}x{c}"
            );
        }
        let value = {
            let x = self.value(a);
            let g = self.value(gain);
            let b = self.value(bias);
            let mut out = Matrix::zeros(x.rows(), x.cols());
            for i in 0..x.rows() {
                let (mean, var) = row_mean_var(x.row(i));
                let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                for j in 0..x.cols() {
                    let normed = (x.get(i, j) - mean) * inv_std;
                    out.set(i, j, g.get(0, j) * normed + b.get(0, j));
                }
            }
            out
        };
        self.push_op(value, Op::LayerNorm { a, gain, bias })
    }

    /// Scale each row to unit L2 norm; rows with norm below
    /// [`ROW_NORM_EPS`] are divided by the floor instead of erroring.
    pub fn row_l2_normalize(&mut self, a: NodeId) -> NodeId {
        let value = {
            let x = self.value(a);
            let mut out = Matrix::zeros(x.rows(), x.cols());
            for i in 0..x.rows() {
                let norm = row_norm(x.row(i)).max(ROW_NORM_EPS);
                for j in 0..x.cols() {
                    out.set(i, j, x.get(i, j) / norm);
                }
            }
            out
        };
        self.push_op(value, Op::RowL2Normalize { a })
    }

    /// Sum of all entries, as a 1x1 node.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let value = Matrix::new(1, 1, vec![self.value(a).sum()]);
        self.push_op(value, Op::SumAll { a })
    }

    pub fn sum_rows(&mut self, a: NodeId) -> NodeId {
        let value = {
            let x = self.value(a);
            Matrix::from_fn(x.rows(), 1, |i, _| x.row(i).iter().sum())
        };
        self.push_op(value, Op::SumRows { a })
    }

    /// Mean binary cross entropy against a fixed 0/1 target matrix.
    pub fn bce_loss(&mut self, p: NodeId, targets: &Matrix) -> NodeId {
        let pv = self.value(p);
        assert_eq!(
            pv.shape(),
            targets.shape(),
            "bce_loss shape mismatch: {}x{} vs {}x{}",
            pv.rows(),
            pv.cols(),
            targets.rows(),
            targets.cols()
        );
        for &y in targets.data() {
            assert!(
                y == 0.0 || y == 1.0,
                "bce_loss target {y} is not in {{0,1}}"
            );
        }
        let n = (pv.rows() * pv.cols()) as f64;
        let mut total = 0.0;
        for (pi, yi) in pv.data().iter().zip(targets.data().iter()) {
            let pc = pi.clamp(BCE_EPS, 1.0 - BCE_EPS);
            total -= yi * pc.ln() + (1.0 - yi) * (1.0 - pc).ln();
        }
        let value = Matrix::new(1, 1, vec![total / n]);
        self.push_op(
            value,
            Op::Bce {
                p,
                targets: targets.clone(),
            },
        )
    }

    /// Mean squared error against a fixed reference matrix.
    pub fn mse_loss(&mut self, a: NodeId, reference: &Matrix) -> NodeId {
        let av = self.value(a);
        assert_eq!(
            av.shape(),
            reference.shape(),
            "mse_loss shape mismatch: {}x{} vs {}x{}",
            av.rows(),
            av.cols(),
            reference.rows(),
            reference.cols()
        );
        let n = (av.rows() * av.cols()) as f64;
        let total: f64 = av
            .data()
            .iter()
            .zip(reference.data().iter())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        let value = Matrix::new(1, 1, vec![total / n]);
        self.push_op(
            value,
            Op::Mse {
                a,
                reference: reference.clone(),
            },
        )
    }

    // ── Backward ─────────────────────────────────────────────────────

    /// Populate gradients of every ancestor of `loss` that requires them.
    /// Gradients accumulate across repeated calls.
    ///
    /// Traversal state lives in a scratch buffer so stored gradients from a
    /// previous call are never re-propagated; each call contributes exactly
    /// one d(loss)/d(node) per node.
    pub fn backward(&mut self, loss: NodeId) {
        assert_eq!(
            self.value(loss).shape(),
            (1, 1),
            "backward requires a 1x1 scalar node, got {}x{}",
            self.value(loss).rows(),
            self.value(loss).cols()
        );
        let mut scratch: Vec<Option<Matrix>> = vec![None; loss + 1];
        scratch[loss] = Some(Matrix::filled(1, 1, 1.0));

        for id in (0..=loss).rev() {
            if !self.nodes[id].requires_grad {
                scratch[id] = None;
                continue;
            }
            let upstream = match scratch[id].take() {
                Some(g) => g,
                None => continue, // not an ancestor of the loss
            };
            self.nodes[id].gradient = self.nodes[id].gradient.add(&upstream);
            let op = self.nodes[id].op.clone();
            match op {
                Op::Leaf => {}
                Op::MatMul { a, b } => {
                    let da = upstream.matmul(&self.nodes[b].value.transpose());
                    let db = self.nodes[a].value.transpose().matmul(&upstream);
                    self.accumulate_scratch(&mut scratch, a, &da);
                    self.accumulate_scratch(&mut scratch, b, &db);
                }
                Op::Add { a, b } => {
                    self.accumulate_scratch(&mut scratch, a, &upstream);
                    self.accumulate_scratch(&mut scratch, b, &upstream);
                }
                Op::Sub { a, b } => {
                    self.accumulate_scratch(&mut scratch, a, &upstream);
                    let neg = upstream.scale(-1.0);
                    self.accumulate_scratch(&mut scratch, b, &neg);
                }
                Op::Hadamard { a, b } => {
                    let da = upstream.hadamard(&self.nodes[b].value);
                    let db = upstream.hadamard(&self.nodes[a].value);
                    self.accumulate_scratch(&mut scratch, a, &da);
                    self.accumulate_scratch(&mut scratch, b, &db);
                }
                Op::AddRow { a, row } => {
                    self.accumulate_scratch(&mut scratch, a, &upstream);
                    let mut drow = Matrix::zeros(1, upstream.cols());
                    for i in 0..upstream.rows() {
                        for j in 0..upstream.cols() {
                            drow.set(0, j, drow.get(0, j) + upstream.get(i, j));
                        }
                    }
                    self.accumulate_scratch(&mut scratch, row, &drow);
                }
                Op::Affine { a, mul } => {
                    let da = upstream.scale(mul);
                    self.accumulate_scratch(&mut scratch, a, &da);
                }
                Op::Transpose { a } => {
                    let da = upstream.transpose();
                    self.accumulate_scratch(&mut scratch, a, &da);
                }
                Op::Sigmoid { a } => {
                    let y = &self.nodes[id].value;
                    let da = Matrix::from_fn(y.rows(), y.cols(), |i, j| {
                        let s = y.get(i, j);
                        upstream.get(i, j) * s * (1.0 - s)
                    });
                    self.accumulate_scratch(&mut scratch, a, &da);
                }
                Op::Relu { a } => {
                    let x = &self.nodes[a].value;
                    let da = Matrix::from_fn(x.rows(), x.cols(), |i, j| {
                        if x.get(i, j) > 0.0 {
                            upstream.get(i, j)
                        } else {
                            0.0
                        }
                    });
                    self.accumulate_scratch(&mut scratch, a, &da);
                }
                Op::SoftmaxRows { a } => {
                    let y = &self.nodes[id].value;
                    let mut da = Matrix::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let dot: f64 = (0..y.cols())
                            .map(|j| upstream.get(i, j) * y.get(i, j))
                            .sum();
                        for j in 0..y.cols() {
                            da.set(i, j, y.get(i, j) * (upstream.get(i, j) - dot));
                        }
                    }
                    self.accumulate_scratch(&mut scratch, a, &da);
                }
                Op::LayerNorm { a, gain, bias } => {
                    let (da, dgain, dbias) = self.layer_norm_backward(a, gain, &upstream);
                    self.accumulate_scratch(&mut scratch, a, &da);
                    self.accumulate_scratch(&mut scratch, gain, &dgain);
                    self.accumulate_scratch(&mut scratch, bias, &dbias);
                }
                Op::RowL2Normalize { a } => {
                    let x = &self.nodes[a].value;
                    let y = &self.nodes[id].value;
                    let mut da = Matrix::zeros(x.rows(), x.cols());
                    for i in 0..x.rows() {
                        let raw_norm = row_norm(x.row(i));
                        let norm = raw_norm.max(ROW_NORM_EPS);
                        if raw_norm < ROW_NORM_EPS {
                            // Divisor saturates at the floor: a plain scaling.
                            for j in 0..x.cols() {
                                da.set(i, j, upstream.get(i, j) / norm);
                            }
                        } else {
                            let dot: f64 = (0..x.cols())
                                .map(|j| upstream.get(i, j) * y.get(i, j))
                                .sum();
                            for j in 0..x.cols() {
                                da.set(i, j, (upstream.get(i, j) - y.get(i, j) * dot) / norm);
                            }
                        }
                    }
                    self.accumulate_scratch(&mut scratch, a, &da);
                }
                Op::SumAll { a } => {
                    let g = upstream.get(0, 0);
                    let shape = self.nodes[a].value.shape();
                    let da = Matrix::filled(shape.0, shape.1, g);
                    self.accumulate_scratch(&mut scratch, a, &da);
                }
                Op::SumRows { a } => {
                    let shape = self.nodes[a].value.shape();
                    let da = Matrix::from_fn(shape.0, shape.1, |i, _| upstream.get(i, 0));
                    self.accumulate_scratch(&mut scratch, a, &da);
                }
                Op::Bce { p, targets } => {
                    let g = upstream.get(0, 0);
                    let pv = &self.nodes[p].value;
                    let n = (pv.rows() * pv.cols()) as f64;
                    let da = Matrix::from_fn(pv.rows(), pv.cols(), |i, j| {
                        let raw = pv.get(i, j);
                        if !(BCE_EPS..=1.0 - BCE_EPS).contains(&raw) {
                            return 0.0; // clamp region is flat
                        }
                        let y = targets.get(i, j);
                        g * (raw - y) / (raw * (1.0 - raw)) / n
                    });
                    self.accumulate_scratch(&mut scratch, p, &da);
                }
                Op::Mse { a, reference } => {
                    let g = upstream.get(0, 0);
                    let av = &self.nodes[a].value;
                    let n = (av.rows() * av.cols()) as f64;
                    let da = Matrix::from_fn(av.rows(), av.cols(), |i, j| {
                        g * 2.0 * (av.get(i, j) - reference.get(i, j)) / n
                    });
                    self.accumulate_scratch(&mut scratch, a, &da);
                }
            }
        }
    }

    fn accumulate_scratch(
        &self,
        scratch: &mut [Option<Matrix>],
        id: NodeId,
        contribution: &Matrix,
    ) {
        if !self.nodes[id].requires_grad {
            return;
        }
        match &mut scratch[id] {
            Some(g) => *g = g.add(contribution),
            slot @ None => *slot = Some(contribution.clone()),
        }
    }

    fn layer_norm_backward(
        &self,
        a: NodeId,
        gain: NodeId,
        upstream: &Matrix,
    ) -> (Matrix, Matrix, Matrix) {
        let x = &self.nodes[a].value;
        let g = &self.nodes[gain].value;
        let (rows, cols) = x.shape();
        let nf = cols as f64;
        let mut da = Matrix::zeros(rows, cols);
        let mut dgain = Matrix::zeros(1, cols);
        let mut dbias = Matrix::zeros(1, cols);
        for i in 0..rows {
            let (mean, var) = row_mean_var(x.row(i));
            let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            // dL/dx through x_hat = (x - mean) * inv_std
            let mut sum_dxhat = 0.0;
            let mut sum_dxhat_xhat = 0.0;
            let mut dxhat = vec![0.0; cols];
            for j in 0..cols {
                let xhat = (x.get(i, j) - mean) * inv_std;
                let d = upstream.get(i, j) * g.get(0, j);
                dxhat[j] = d;
                sum_dxhat += d;
                sum_dxhat_xhat += d * xhat;
                dgain.set(0, j, dgain.get(0, j) + upstream.get(i, j) * xhat);
                dbias.set(0, j, dbias.get(0, j) + upstream.get(i, j));
            }
            for j in 0..cols {
                let xhat = (x.get(i, j) - mean) * inv_std;
                let v = inv_std * (dxhat[j] - sum_dxhat / nf - xhat * sum_dxhat_xhat / nf);
                da.set(i, j, v);
            }
        }
        (da, dgain, dbias)
    }
}

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_rows_value(x: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        let row_max = x.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for j in 0..x.cols() {
            let e = (x.get(i, j) - row_max).exp();
            out.set(i, j, e);
            denom += e;
        }
        for j in 0..x.cols() {
            out.set(i, j, out.get(i, j) / denom);
        }
    }
    out
}

fn row_mean_var(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

fn row_norm(row: &[f64]) -> f64 {
    row.iter().map(|&x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
    }

    #[test]
    fn sum_of_leaf_gives_ones() {
        let mut tape = Tape::new();
        let x = tape.variable(mat(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let loss = tape.sum(x);
        tape.backward(loss);
        assert_eq!(*tape.gradient(x), Matrix::filled(2, 2, 1.0));
    }

    #[test]
    fn sum_of_doubled_leaf_gives_twos() {
        let mut tape = Tape::new();
        let x = tape.variable(mat(&[&[1.0, -1.0, 0.5]]));
        let doubled = tape.scale(x, 2.0);
        let loss = tape.sum(doubled);
        tape.backward(loss);
        assert_eq!(*tape.gradient(x), Matrix::filled(1, 3, 2.0));
    }

    #[test]
    fn diamond_graph_sums_both_paths() {
        // loss = sum(x + x): each entry contributes twice.
        let mut tape = Tape::new();
        let x = tape.variable(mat(&[&[3.0, -2.0]]));
        let both = tape.add(x, x);
        let loss = tape.sum(both);
        tape.backward(loss);
        assert_eq!(*tape.gradient(x), Matrix::filled(1, 2, 2.0));
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut tape = Tape::new();
        let x = tape.variable(mat(&[&[1.0]]));
        let loss = tape.sum(x);
        tape.backward(loss);
        tape.backward(loss);
        assert_eq!(tape.gradient(x).get(0, 0), 2.0);
    }

    #[test]
    #[should_panic(expected = "backward requires a 1x1 scalar node")]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = tape.variable(mat(&[&[1.0, 2.0]]));
        tape.backward(x);
    }

    #[test]
    fn softmax_symmetry_and_analytic() {
        let mut tape = Tape::new();
        let x = tape.constant(mat(&[&[0.0, 0.0]]));
        let s = tape.softmax_rows(x);
        assert!((tape.value(s).get(0, 0) - 0.5).abs() < 1e-15);

        let x2 = tape.constant(mat(&[&[2.0_f64.ln(), 0.0]]));
        let s2 = tape.softmax_rows(x2);
        assert!((tape.value(s2).get(0, 0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((tape.value(s2).get(0, 1) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = crate::rng::Rng::from_seed(17);
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::randn(3, 4, 2.0, &mut rng));
        let s = tape.softmax_rows(x);
        for i in 0..3 {
            let sum: f64 = tape.value(s).row(i).iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sigmoid_edges() {
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        let v = sigmoid_scalar(-100.0);
        assert!(v > 0.0 && v <= 1e-40, "sigmoid(-100) = {v}");
        assert!(sigmoid_scalar(-100.0).is_finite());
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let mut tape = Tape::new();
        let x = tape.constant(mat(&[&[5.0, 5.0, 5.0]]));
        let gain = tape.constant(Matrix::filled(1, 3, 1.0));
        let bias = tape.constant(Matrix::zeros(1, 3));
        let out = tape.layer_norm(x, gain, bias);
        assert_eq!(*tape.value(out), Matrix::zeros(1, 3));
    }

    #[test]
    fn layer_norm_already_standard_row() {
        let mut tape = Tape::new();
        let x = tape.constant(mat(&[&[1.0, -1.0]]));
        let gain = tape.constant(Matrix::filled(1, 2, 1.0));
        let bias = tape.constant(Matrix::zeros(1, 2));
        let out = tape.layer_norm(x, gain, bias);
        // unit variance up to the epsilon in the denominator
        assert!((tape.value(out).get(0, 0) - 1.0).abs() < 1e-5);
        assert!((tape.value(out).get(0, 1) + 1.0).abs() < 1e-5);
    }

    #[test]
    fn layer_norm_output_rows_zero_mean() {
        let mut rng = crate::rng::Rng::from_seed(23);
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::randn(4, 6, 1.5, &mut rng));
        let gain = tape.constant(Matrix::filled(1, 6, 1.0));
        let bias = tape.constant(Matrix::zeros(1, 6));
        let out = tape.layer_norm(x, gain, bias);
        for i in 0..4 {
            let mean: f64 = tape.value(out).row(i).iter().sum::<f64>() / 6.0;
            assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn bce_analytic_values() {
        let mut tape = Tape::new();
        let p = tape.constant(mat(&[&[0.5]]));
        let loss = tape.bce_loss(p, &mat(&[&[1.0]]));
        assert!((tape.scalar_value(loss) - 2.0_f64.ln()).abs() < 1e-12);

        let p2 = tape.constant(mat(&[&[1.0 - BCE_EPS]]));
        let loss2 = tape.bce_loss(p2, &mat(&[&[1.0]]));
        assert!(tape.scalar_value(loss2) < 1e-6);
    }

    #[test]
    #[should_panic(expected = "not in {0,1}")]
    fn bce_rejects_fractional_targets() {
        let mut tape = Tape::new();
        let p = tape.constant(mat(&[&[0.5]]));
        tape.bce_loss(p, &mat(&[&[0.3]]));
    }

    #[test]
    fn mse_analytic_values() {
        let mut tape = Tape::new();
        let a = tape.constant(mat(&[&[1.0]]));
        let zero = tape.mse_loss(a, &mat(&[&[1.0]]));
        assert_eq!(tape.scalar_value(zero), 0.0);
        let one = tape.mse_loss(a, &mat(&[&[0.0]]));
        assert_eq!(tape.scalar_value(one), 1.0);
    }

    #[test]
    fn determinism_bit_identical() {
        let run = || {
            let mut rng = crate::rng::Rng::from_seed(99);
            let mut tape = Tape::new();
            let x = tape.variable(Matrix::randn(3, 3, 1.0, &mut rng));
            let w = tape.variable(Matrix::randn(3, 3, 1.0, &mut rng));
            let prod = tape.matmul(x, w);
            let act = tape.sigmoid(prod);
            let loss = tape.sum(act);
            tape.backward(loss);
            (tape.value(loss).clone(), tape.gradient(w).clone())
        };
        let (l1, g1) = run();
        let (l2, g2) = run();
        assert_eq!(l1, l2);
        assert_eq!(g1, g2);
    }
}
