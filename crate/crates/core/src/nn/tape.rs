//! Reverse-mode automatic differentiation on batched 2-d arrays.
//!
//! The tape records primitive operations in topological order during the
//! forward pass; `backward` sweeps the records in reverse, accumulating
//! adjoints. Controllers register their parameters as leaves and read the
//! parameter gradients back by node id after the sweep.
//!
//! Everything is a row-major `[rows, cols]` array; batches of paths live in
//! the row dimension. Scalars are `[1, 1]`.

use ndarray::{concatenate, s, Array2, Axis};

use crate::error::{Error, Result};
use crate::model::wrap_angle;

pub type Mat = Array2<f64>;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    Add(NodeId, NodeId),
    /// `[m,n] + [1,n]`, the bias broadcast.
    AddRow(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId, f64),
    Neg(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Sin(NodeId),
    Cos(NodeId),
    Sqrt(NodeId),
    Square(NodeId),
    Recip(NodeId),
    /// max(x, c) elementwise; gradient passes only where x > c.
    MaxScalar(NodeId, f64),
    /// Reduce angles to [-pi, pi); a piecewise shift, so the gradient is 1.
    WrapAngle(NodeId),
    /// `[m,n] -> [m,1]` sum over columns.
    RowSum(NodeId),
    SumAll(NodeId),
    MeanAll(NodeId),
    /// `[g*b, 1] -> [g, 1]`: mean over consecutive groups of `b` rows.
    GroupMeanRows(NodeId, usize),
    ConcatCols(Vec<NodeId>),
    SliceCols(NodeId, usize, usize),
    /// `[m,1] -> [1,1]`: log sum_i exp(x_i).
    LogSumExpCol(NodeId),
}

/// Append-only record of a differentiable computation.
#[derive(Default)]
pub struct Tape {
    ops: Vec<Op>,
    values: Vec<Mat>,
    adjoints: Vec<Option<Mat>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Mat {
        &self.values[id.0]
    }

    /// Adjoint of `id` after `backward`; zeros if the node is disconnected
    /// from the loss.
    pub fn grad(&self, id: NodeId) -> Mat {
        match &self.adjoints[id.0] {
            Some(g) => g.clone(),
            None => Mat::zeros(self.values[id.0].raw_dim()),
        }
    }

    fn push(&mut self, op: Op, value: Mat) -> NodeId {
        let id = NodeId(self.ops.len());
        self.ops.push(op);
        self.values.push(value);
        self.adjoints.push(None);
        id
    }

    pub fn leaf(&mut self, value: Mat) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn scalar(&mut self, value: f64) -> NodeId {
        self.leaf(Mat::from_elem((1, 1), value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        debug_assert_eq!(self.values[a.0].dim(), self.values[b.0].dim());
        let v = &self.values[a.0] + &self.values[b.0];
        self.push(Op::Add(a, b), v)
    }

    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let dim = self.values[a.0].dim();
        debug_assert_eq!(self.values[bias.0].dim(), (1, dim.1));
        let v = &self.values[a.0] + &self.values[bias.0].broadcast(dim).unwrap();
        self.push(Op::AddRow(a, bias), v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        debug_assert_eq!(self.values[a.0].dim(), self.values[b.0].dim());
        let v = &self.values[a.0] - &self.values[b.0];
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        debug_assert_eq!(self.values[a.0].dim(), self.values[b.0].dim());
        let v = &self.values[a.0] * &self.values[b.0];
        self.push(Op::Mul(a, b), v)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        debug_assert_eq!(self.values[a.0].dim().1, self.values[b.0].dim().0);
        let v = self.values[a.0].dot(&self.values[b.0]);
        self.push(Op::MatMul(a, b), v)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.values[a.0].mapv(|x| x * c);
        self.push(Op::Scale(a, c), v)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.values[a.0].mapv(|x| x + c);
        self.push(Op::AddScalar(a, c), v)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].mapv(|x| -x);
        self.push(Op::Neg(a), v)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].mapv(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].mapv(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(Op::Sigmoid(a), v)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].mapv(f64::exp);
        self.push(Op::Exp(a), v)
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].mapv(f64::ln);
        self.push(Op::Ln(a), v)
    }

    pub fn sin(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].mapv(f64::sin);
        self.push(Op::Sin(a), v)
    }

    pub fn cos(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].mapv(f64::cos);
        self.push(Op::Cos(a), v)
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].mapv(f64::sqrt);
        self.push(Op::Sqrt(a), v)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].mapv(|x| x * x);
        self.push(Op::Square(a), v)
    }

    pub fn recip(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].mapv(f64::recip);
        self.push(Op::Recip(a), v)
    }

    pub fn max_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.values[a.0].mapv(|x| x.max(c));
        self.push(Op::MaxScalar(a, c), v)
    }

    pub fn wrap_angle(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].mapv(wrap_angle);
        self.push(Op::WrapAngle(a), v)
    }

    pub fn row_sum(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(Op::RowSum(a), v)
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let v = Mat::from_elem((1, 1), self.values[a.0].sum());
        self.push(Op::SumAll(a), v)
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let v = Mat::from_elem((1, 1), self.values[a.0].mean().unwrap_or(f64::NAN));
        self.push(Op::MeanAll(a), v)
    }

    pub fn group_mean_rows(&mut self, a: NodeId, group_size: usize) -> NodeId {
        let (rows, cols) = self.values[a.0].dim();
        debug_assert_eq!(cols, 1);
        debug_assert_eq!(rows % group_size, 0);
        let groups = rows / group_size;
        let mut v = Mat::zeros((groups, 1));
        for g in 0..groups {
            let mut acc = 0.0;
            for r in 0..group_size {
                acc += self.values[a.0][(g * group_size + r, 0)];
            }
            v[(g, 0)] = acc / group_size as f64;
        }
        self.push(Op::GroupMeanRows(a, group_size), v)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let views: Vec<_> = parts.iter().map(|id| self.values[id.0].view()).collect();
        let v = concatenate(Axis(1), &views).expect("concat_cols: row counts must match");
        self.push(Op::ConcatCols(parts.to_vec()), v)
    }

    pub fn slice_cols(&mut self, a: NodeId, lo: usize, hi: usize) -> NodeId {
        let v = self.values[a.0].slice(s![.., lo..hi]).to_owned();
        self.push(Op::SliceCols(a, lo, hi), v)
    }

    pub fn logsumexp_col(&mut self, a: NodeId) -> NodeId {
        debug_assert_eq!(self.values[a.0].dim().1, 1);
        let col = self.values[a.0].column(0);
        let m = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let value = if m == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            m + col.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
        };
        self.push(Op::LogSumExpCol(a), Mat::from_elem((1, 1), value))
    }

    fn bump(&mut self, id: NodeId, delta: &Mat) {
        match &mut self.adjoints[id.0] {
            Some(g) => *g += delta,
            slot @ None => *slot = Some(delta.clone()),
        }
    }

    /// Reverse sweep from a scalar loss node. Populates adjoints; parameter
    /// gradients are then read with [`Tape::grad`].
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.values[loss.0].dim() != (1, 1) {
            return Err(Error::Config(format!(
                "backward needs a scalar loss node, got shape {:?}",
                self.values[loss.0].dim()
            )));
        }
        for g in self.adjoints.iter_mut() {
            *g = None;
        }
        self.adjoints[loss.0] = Some(Mat::from_elem((1, 1), 1.0));

        for idx in (0..self.ops.len()).rev() {
            let g = match self.adjoints[idx].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.ops[idx] {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    self.bump(a, &g);
                    self.bump(b, &g);
                }
                Op::AddRow(a, bias) => {
                    let (a, bias) = (*a, *bias);
                    self.bump(a, &g);
                    let col = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    self.bump(bias, &col);
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    self.bump(a, &g);
                    let neg = g.mapv(|x| -x);
                    self.bump(b, &neg);
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let da = &g * &self.values[b.0];
                    let db = &g * &self.values[a.0];
                    self.bump(a, &da);
                    self.bump(b, &db);
                }
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    let da = g.dot(&self.values[b.0].t());
                    let db = self.values[a.0].t().dot(&g);
                    self.bump(a, &da);
                    self.bump(b, &db);
                }
                Op::Scale(a, c) => {
                    let (a, c) = (*a, *c);
                    let da = g.mapv(|x| x * c);
                    self.bump(a, &da);
                }
                Op::AddScalar(a, _) => {
                    let a = *a;
                    self.bump(a, &g);
                }
                Op::Neg(a) => {
                    let a = *a;
                    let da = g.mapv(|x| -x);
                    self.bump(a, &da);
                }
                Op::Tanh(a) => {
                    let a = *a;
                    let y = &self.values[idx];
                    let da = &g * &y.mapv(|y| 1.0 - y * y);
                    self.bump(a, &da);
                }
                Op::Sigmoid(a) => {
                    let a = *a;
                    let y = &self.values[idx];
                    let da = &g * &y.mapv(|y| y * (1.0 - y));
                    self.bump(a, &da);
                }
                Op::Exp(a) => {
                    let a = *a;
                    let da = &g * &self.values[idx];
                    self.bump(a, &da);
                }
                Op::Ln(a) => {
                    let a = *a;
                    let da = &g / &self.values[a.0];
                    self.bump(a, &da);
                }
                Op::Sin(a) => {
                    let a = *a;
                    let da = &g * &self.values[a.0].mapv(f64::cos);
                    self.bump(a, &da);
                }
                Op::Cos(a) => {
                    let a = *a;
                    let da = &g * &self.values[a.0].mapv(|x| -x.sin());
                    self.bump(a, &da);
                }
                Op::Sqrt(a) => {
                    let a = *a;
                    let da = &g / &self.values[idx].mapv(|y| 2.0 * y);
                    self.bump(a, &da);
                }
                Op::Square(a) => {
                    let a = *a;
                    let da = &g * &self.values[a.0].mapv(|x| 2.0 * x);
                    self.bump(a, &da);
                }
                Op::Recip(a) => {
                    let a = *a;
                    let da = &g * &self.values[idx].mapv(|y| -y * y);
                    self.bump(a, &da);
                }
                Op::MaxScalar(a, c) => {
                    let (a, c) = (*a, *c);
                    let mask = self.values[a.0].mapv(|x| if x > c { 1.0 } else { 0.0 });
                    let da = &g * &mask;
                    self.bump(a, &da);
                }
                Op::WrapAngle(a) => {
                    let a = *a;
                    self.bump(a, &g);
                }
                Op::RowSum(a) => {
                    let a = *a;
                    let dim = self.values[a.0].dim();
                    let da = g.broadcast(dim).unwrap().to_owned();
                    self.bump(a, &da);
                }
                Op::SumAll(a) => {
                    let a = *a;
                    let da = Mat::from_elem(self.values[a.0].raw_dim(), g[(0, 0)]);
                    self.bump(a, &da);
                }
                Op::MeanAll(a) => {
                    let a = *a;
                    let len = self.values[a.0].len() as f64;
                    let da = Mat::from_elem(self.values[a.0].raw_dim(), g[(0, 0)] / len);
                    self.bump(a, &da);
                }
                Op::GroupMeanRows(a, group_size) => {
                    let (a, group_size) = (*a, *group_size);
                    let rows = self.values[a.0].dim().0;
                    let mut da = Mat::zeros((rows, 1));
                    for r in 0..rows {
                        da[(r, 0)] = g[(r / group_size, 0)] / group_size as f64;
                    }
                    self.bump(a, &da);
                }
                Op::ConcatCols(parts) => {
                    let parts = parts.clone();
                    let mut lo = 0;
                    for part in parts {
                        let width = self.values[part.0].dim().1;
                        let da = g.slice(s![.., lo..lo + width]).to_owned();
                        self.bump(part, &da);
                        lo += width;
                    }
                }
                Op::SliceCols(a, lo, hi) => {
                    let (a, lo, hi) = (*a, *lo, *hi);
                    let mut da = Mat::zeros(self.values[a.0].raw_dim());
                    da.slice_mut(s![.., lo..hi]).assign(&g);
                    self.bump(a, &da);
                }
                Op::LogSumExpCol(a) => {
                    let a = *a;
                    let y = self.values[idx][(0, 0)];
                    let da = self.values[a.0].mapv(|x| (x - y).exp() * g[(0, 0)]);
                    self.bump(a, &da);
                }
            }
            // keep leaf adjoints (parameters); interior adjoints were taken
            if matches!(self.ops[idx], Op::Leaf) {
                self.adjoints[idx] = Some(g);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Central finite difference of `f` at `x`, one parameter entry at a time.
    fn finite_diff<F: Fn(&Mat) -> f64>(f: F, x: &Mat, h: f64) -> Mat {
        let mut grad = Mat::zeros(x.raw_dim());
        for idx in 0..x.len() {
            let (r, c) = (idx / x.dim().1, idx % x.dim().1);
            let mut xp = x.clone();
            xp[(r, c)] += h;
            let mut xm = x.clone();
            xm[(r, c)] -= h;
            grad[(r, c)] = (f(&xp) - f(&xm)) / (2.0 * h);
        }
        grad
    }

    fn rel_err(a: &Mat, b: &Mat) -> f64 {
        let mut worst: f64 = 0.0;
        for (x, y) in a.iter().zip(b.iter()) {
            let denom = x.abs().max(y.abs()).max(1e-6);
            worst = worst.max((x - y).abs() / denom);
        }
        worst
    }

    #[test]
    fn quadratic_gradient_is_two_x() {
        let mut tape = Tape::new();
        let p = tape.leaf(Mat::from_shape_vec((1, 3), vec![1.0, -2.0, 0.5]).unwrap());
        let sq = tape.square(p);
        let loss = tape.sum_all(sq);
        tape.backward(loss).unwrap();
        let g = tape.grad(p);
        assert_abs_diff_eq!(g[(0, 0)], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g[(0, 1)], -4.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g[(0, 2)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn constant_has_zero_gradient() {
        let mut tape = Tape::new();
        let p = tape.leaf(Mat::from_elem((2, 2), 0.3));
        let c = tape.scalar(4.0);
        tape.backward(c).unwrap();
        assert_eq!(tape.grad(p), Mat::zeros((2, 2)));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let p = tape.leaf(Mat::zeros((2, 2)));
        assert!(tape.backward(p).is_err());
    }

    #[test]
    fn matmul_and_concat_match_finite_differences() {
        let w0 = Mat::from_shape_vec((3, 2), vec![0.3, -0.2, 0.7, 0.1, -0.5, 0.4]).unwrap();
        let loss_of = |w: &Mat| -> f64 {
            let mut tape = Tape::new();
            let x = tape.leaf(Mat::from_shape_vec((2, 2), vec![0.5, -1.0, 0.25, 0.75]).unwrap());
            let y = tape.leaf(Mat::from_shape_vec((2, 1), vec![-0.3, 0.9]).unwrap());
            let wx = tape.leaf(w.clone());
            let cat = tape.concat_cols(&[x, y]);
            let h = tape.matmul(cat, wx);
            let t = tape.tanh(h);
            let loss = tape.mean_all(t);
            tape.value(loss)[(0, 0)]
        };
        let fd = finite_diff(loss_of, &w0, 1e-5);

        let mut tape = Tape::new();
        let x = tape.leaf(Mat::from_shape_vec((2, 2), vec![0.5, -1.0, 0.25, 0.75]).unwrap());
        let y = tape.leaf(Mat::from_shape_vec((2, 1), vec![-0.3, 0.9]).unwrap());
        let w = tape.leaf(w0.clone());
        let cat = tape.concat_cols(&[x, y]);
        let h = tape.matmul(cat, w);
        let t = tape.tanh(h);
        let loss = tape.mean_all(t);
        tape.backward(loss).unwrap();
        assert!(rel_err(&tape.grad(w), &fd) < 1e-7);
    }

    #[test]
    fn logsumexp_grad_is_softmax() {
        let mut tape = Tape::new();
        let x = tape.leaf(Mat::from_shape_vec((3, 1), vec![0.2, -1.0, 2.0]).unwrap());
        let lse = tape.logsumexp_col(x);
        tape.backward(lse).unwrap();
        let g = tape.grad(x);
        let z: f64 = [0.2f64, -1.0, 2.0].iter().map(|v| v.exp()).sum();
        for (i, v) in [0.2f64, -1.0, 2.0].iter().enumerate() {
            assert_abs_diff_eq!(g[(i, 0)], v.exp() / z, epsilon = 1e-12);
        }
    }

    #[test]
    fn group_mean_rows_forward_and_backward() {
        let mut tape = Tape::new();
        let x = tape.leaf(Mat::from_shape_vec((4, 1), vec![1.0, 3.0, -2.0, 6.0]).unwrap());
        let gm = tape.group_mean_rows(x, 2);
        assert_abs_diff_eq!(tape.value(gm)[(0, 0)], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(tape.value(gm)[(1, 0)], 2.0, epsilon = 1e-15);
        let s = tape.sum_all(gm);
        tape.backward(s).unwrap();
        assert!(tape.grad(x).iter().all(|&g| (g - 0.5).abs() < 1e-15));
    }

    /// Each primitive checked against central differences on random inputs.
    macro_rules! primitive_grad_case {
        ($tape:ident, $x:ident, $body:expr) => {{
            let build = |v: &Mat| -> f64 {
                let mut $tape = Tape::new();
                let $x = $tape.leaf(v.clone());
                let out = $body;
                let loss = $tape.sum_all(out);
                $tape.value(loss)[(0, 0)]
            };
            build
        }};
    }

    fn check_primitive<FBuild, FGrad>(value: Mat, f: FBuild, g: FGrad)
    where
        FBuild: Fn(&Mat) -> f64,
        FGrad: Fn(&Mat) -> Mat,
    {
        let fd = finite_diff(&f, &value, 1e-4);
        let an = g(&value);
        assert!(
            rel_err(&an, &fd) < 1e-6,
            "primitive gradient mismatch: analytic {an:?} vs fd {fd:?}"
        );
    }

    fn analytic_grad<FOp>(value: &Mat, op: FOp) -> Mat
    where
        FOp: Fn(&mut Tape, NodeId) -> NodeId,
    {
        let mut tape = Tape::new();
        let x = tape.leaf(value.clone());
        let out = op(&mut tape, x);
        let loss = tape.sum_all(out);
        tape.backward(loss).unwrap();
        tape.grad(x)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn unary_primitives_match_central_differences(
            vals in proptest::collection::vec(0.5f64..1.8, 6)
        ) {
            let m = Mat::from_shape_vec((2, 3), vals).unwrap();

            let f = primitive_grad_case!(t, x, t.tanh(x));
            check_primitive(m.clone(), f, |v| analytic_grad(v, |t, x| t.tanh(x)));

            let f = primitive_grad_case!(t, x, t.sigmoid(x));
            check_primitive(m.clone(), f, |v| analytic_grad(v, |t, x| t.sigmoid(x)));

            let f = primitive_grad_case!(t, x, t.exp(x));
            check_primitive(m.clone(), f, |v| analytic_grad(v, |t, x| t.exp(x)));

            let f = primitive_grad_case!(t, x, t.ln(x));
            check_primitive(m.clone(), f, |v| analytic_grad(v, |t, x| t.ln(x)));

            let f = primitive_grad_case!(t, x, t.sin(x));
            check_primitive(m.clone(), f, |v| analytic_grad(v, |t, x| t.sin(x)));

            let f = primitive_grad_case!(t, x, t.cos(x));
            check_primitive(m.clone(), f, |v| analytic_grad(v, |t, x| t.cos(x)));

            let f = primitive_grad_case!(t, x, t.sqrt(x));
            check_primitive(m.clone(), f, |v| analytic_grad(v, |t, x| t.sqrt(x)));

            let f = primitive_grad_case!(t, x, t.square(x));
            check_primitive(m.clone(), f, |v| analytic_grad(v, |t, x| t.square(x)));

            let f = primitive_grad_case!(t, x, t.recip(x));
            check_primitive(m.clone(), f, |v| analytic_grad(v, |t, x| t.recip(x)));

            let f = primitive_grad_case!(t, x, t.scale(x, -1.7));
            check_primitive(m.clone(), f, |v| analytic_grad(v, |t, x| t.scale(x, -1.7)));

            // away from the clamp kink at 1.0 the gradient is exact
            let f = primitive_grad_case!(t, x, t.max_scalar(x, 1.0));
            let fd_ok = m.iter().all(|&v| (v - 1.0).abs() > 1e-3);
            if fd_ok {
                check_primitive(m.clone(), f, |v| analytic_grad(v, |t, x| t.max_scalar(x, 1.0)));
            }

            let f = primitive_grad_case!(t, x, t.row_sum(x));
            check_primitive(m.clone(), f, |v| analytic_grad(v, |t, x| t.row_sum(x)));

            let f = primitive_grad_case!(t, x, t.mean_all(x));
            check_primitive(m.clone(), f, |v| analytic_grad(v, |t, x| t.mean_all(x)));
        }

        #[test]
        fn binary_primitives_match_central_differences(
            a in proptest::collection::vec(-1.5f64..1.5, 4),
            b in proptest::collection::vec(0.4f64..1.6, 4)
        ) {
            let mb = Mat::from_shape_vec((2, 2), b).unwrap();
            let loss_of = |v: &Mat| -> f64 {
                let mut tape = Tape::new();
                let x = tape.leaf(v.clone());
                let y = tape.leaf(mb.clone());
                let p = tape.mul(x, y);
                let q = tape.sub(p, y);
                let r = tape.add(q, x);
                let loss = tape.sum_all(r);
                tape.value(loss)[(0, 0)]
            };
            let ma = Mat::from_shape_vec((2, 2), a).unwrap();
            let fd = finite_diff(loss_of, &ma, 1e-4);

            let mut tape = Tape::new();
            let x = tape.leaf(ma.clone());
            let y = tape.leaf(mb.clone());
            let p = tape.mul(x, y);
            let q = tape.sub(p, y);
            let r = tape.add(q, x);
            let loss = tape.sum_all(r);
            tape.backward(loss).unwrap();
            prop_assert!(rel_err(&tape.grad(x), &fd) < 1e-6);
        }
    }
}
