//! Shared bidirectional gated-recurrent controller for chain systems.
//!
//! One stack of cells scans the chain left to right, the *same* stack scans
//! right to left, and a dense head maps the concatenated top-layer hidden
//! states at each site to one control value. Hidden states run across sites
//! at fixed time, not across time, so the parameter count is independent of
//! the chain length and a trained controller evaluates on any N.

use ndarray::s;
use rand_chacha::ChaCha8Rng;

use super::mlp::xavier;
use super::tape::{Mat, NodeId, Tape};
use crate::error::{Error, Result};

/// LSTM cell parameters; gate order (input, forget, cell, output).
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    /// `[input_dim + hidden, 4*hidden]`
    pub w: Mat,
    /// `[1, 4*hidden]`
    pub b: Mat,
}

impl LstmCell {
    fn new(input_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        LstmCell {
            w: xavier(input_dim + hidden, 4 * hidden, rng),
            b: Mat::zeros((1, 4 * hidden)),
        }
    }

    /// One step: returns (h', c').
    fn step(&self, x: &Mat, h: &Mat, c: &Mat, hidden: usize) -> (Mat, Mat) {
        let joined = ndarray::concatenate(ndarray::Axis(1), &[x.view(), h.view()]).unwrap();
        let mut gates = joined.dot(&self.w);
        gates += &self.b.broadcast(gates.raw_dim()).unwrap();
        let i = gates.slice(s![.., 0..hidden]).mapv(sigmoid);
        let f = gates.slice(s![.., hidden..2 * hidden]).mapv(sigmoid);
        let g = gates.slice(s![.., 2 * hidden..3 * hidden]).mapv(f64::tanh);
        let o = gates.slice(s![.., 3 * hidden..4 * hidden]).mapv(sigmoid);
        let c_next = &f * c + &i * &g;
        let h_next = &o * &c_next.mapv(f64::tanh);
        (h_next, c_next)
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Site-recurrent controller: stacked shared cells in both directions plus a
/// zero-initialized dense head.
#[derive(Debug, Clone, PartialEq)]
pub struct BiRecurrentController {
    pub cells: Vec<LstmCell>,
    /// `[2*hidden, 1]`
    pub head_w: Mat,
    /// `[1, 1]`
    pub head_b: Mat,
    pub hidden: usize,
    pub input_dim: usize,
}

impl BiRecurrentController {
    pub fn new(input_dim: usize, hidden: usize, depth: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut cells = Vec::with_capacity(depth);
        let mut fan_in = input_dim;
        for _ in 0..depth {
            cells.push(LstmCell::new(fan_in, hidden, rng));
            fan_in = hidden;
        }
        BiRecurrentController {
            cells,
            head_w: Mat::zeros((2 * hidden, 1)),
            head_b: Mat::zeros((1, 1)),
            hidden,
            input_dim,
        }
    }

    pub fn depth(&self) -> usize {
        self.cells.len()
    }

    /// Top-layer hidden state at every site for one scan direction.
    pub(crate) fn scan(&self, site_features: &[Mat], reverse: bool) -> Vec<Mat> {
        let n = site_features.len();
        let rows = site_features[0].dim().0;
        let mut h: Vec<Mat> = vec![Mat::zeros((rows, self.hidden)); self.cells.len()];
        let mut c: Vec<Mat> = vec![Mat::zeros((rows, self.hidden)); self.cells.len()];
        let mut top = vec![Mat::zeros((0, 0)); n];
        let order: Vec<usize> = if reverse { (0..n).rev().collect() } else { (0..n).collect() };
        for site in order {
            let mut input = site_features[site].clone();
            for (layer, cell) in self.cells.iter().enumerate() {
                let (h_next, c_next) = cell.step(&input, &h[layer], &c[layer], self.hidden);
                input = h_next.clone();
                h[layer] = h_next;
                c[layer] = c_next;
            }
            top[site] = h[self.cells.len() - 1].clone();
        }
        top
    }

    /// Controls for an N-site chain: `site_features` holds one `[rows, F]`
    /// block per site; the result is `[rows, N]`. Any N >= 2 is accepted,
    /// including sizes never seen in training.
    pub fn forward(&self, site_features: &[Mat]) -> Result<Mat> {
        if site_features.is_empty() {
            return Err(Error::Config("birecurrent forward needs at least one site".into()));
        }
        for f in site_features {
            if f.dim().1 != self.input_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.input_dim,
                    got: f.dim().1,
                });
            }
        }
        let fwd = self.scan(site_features, false);
        let bwd = self.scan(site_features, true);
        let n = site_features.len();
        let rows = site_features[0].dim().0;
        let mut out = Mat::zeros((rows, n));
        for i in 0..n {
            let joined = ndarray::concatenate(ndarray::Axis(1), &[fwd[i].view(), bwd[i].view()]).unwrap();
            let mut y = joined.dot(&self.head_w);
            y += &self.head_b.broadcast(y.raw_dim()).unwrap();
            out.column_mut(i).assign(&y.column(0));
        }
        Ok(out)
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.cells.len() {
            names.push(format!("cell{i}.w"));
            names.push(format!("cell{i}.b"));
        }
        names.push("head.w".into());
        names.push("head.b".into());
        names
    }

    pub fn params(&self) -> Vec<&Mat> {
        let mut p: Vec<&Mat> = self.cells.iter().flat_map(|c| [&c.w, &c.b]).collect();
        p.push(&self.head_w);
        p.push(&self.head_b);
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Mat> {
        let mut p: Vec<&mut Mat> = self
            .cells
            .iter_mut()
            .flat_map(|c| [&mut c.w, &mut c.b])
            .collect();
        p.push(&mut self.head_w);
        p.push(&mut self.head_b);
        p
    }

    pub fn register(&self, tape: &mut Tape) -> TapedBiRecurrent {
        let cells = self
            .cells
            .iter()
            .map(|c| (tape.leaf(c.w.clone()), tape.leaf(c.b.clone())))
            .collect();
        TapedBiRecurrent {
            cells,
            head_w: tape.leaf(self.head_w.clone()),
            head_b: tape.leaf(self.head_b.clone()),
            hidden: self.hidden,
        }
    }
}

/// Tape-resident parameters for one training step.
pub struct TapedBiRecurrent {
    cells: Vec<(NodeId, NodeId)>,
    head_w: NodeId,
    head_b: NodeId,
    hidden: usize,
}

impl TapedBiRecurrent {
    fn cell_step(
        &self,
        tape: &mut Tape,
        cell: (NodeId, NodeId),
        x: NodeId,
        h: NodeId,
        c: NodeId,
    ) -> (NodeId, NodeId) {
        let hd = self.hidden;
        let joined = tape.concat_cols(&[x, h]);
        let lin = tape.matmul(joined, cell.0);
        let gates = tape.add_row(lin, cell.1);
        let i_raw = tape.slice_cols(gates, 0, hd);
        let i = tape.sigmoid(i_raw);
        let f_raw = tape.slice_cols(gates, hd, 2 * hd);
        let f = tape.sigmoid(f_raw);
        let g_raw = tape.slice_cols(gates, 2 * hd, 3 * hd);
        let g = tape.tanh(g_raw);
        let o_raw = tape.slice_cols(gates, 3 * hd, 4 * hd);
        let o = tape.sigmoid(o_raw);
        let fc = tape.mul(f, c);
        let ig = tape.mul(i, g);
        let c_next = tape.add(fc, ig);
        let ct = tape.tanh(c_next);
        let h_next = tape.mul(o, ct);
        (h_next, c_next)
    }

    fn scan(&self, tape: &mut Tape, site_features: &[NodeId], reverse: bool) -> Vec<NodeId> {
        let n = site_features.len();
        let rows = tape.value(site_features[0]).dim().0;
        let zero = tape.leaf(Mat::zeros((rows, self.hidden)));
        let mut h = vec![zero; self.cells.len()];
        let mut c = vec![zero; self.cells.len()];
        let mut top = vec![zero; n];
        let order: Vec<usize> = if reverse { (0..n).rev().collect() } else { (0..n).collect() };
        for site in order {
            let mut input = site_features[site];
            for (layer, cell) in self.cells.iter().enumerate() {
                let (h_next, c_next) = self.cell_step(tape, *cell, input, h[layer], c[layer]);
                input = h_next;
                h[layer] = h_next;
                c[layer] = c_next;
            }
            top[site] = h[self.cells.len() - 1];
        }
        top
    }

    pub fn forward(&self, tape: &mut Tape, site_features: &[NodeId]) -> NodeId {
        let fwd = self.scan(tape, site_features, false);
        let bwd = self.scan(tape, site_features, true);
        let mut cols = Vec::with_capacity(site_features.len());
        for i in 0..site_features.len() {
            let joined = tape.concat_cols(&[fwd[i], bwd[i]]);
            let lin = tape.matmul(joined, self.head_w);
            cols.push(tape.add_row(lin, self.head_b));
        }
        tape.concat_cols(&cols)
    }

    pub fn param_ids(&self) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> = self.cells.iter().flat_map(|&(w, b)| [w, b]).collect();
        ids.push(self.head_w);
        ids.push(self.head_b);
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;

    fn random_features(n: usize, rows: usize, f: usize, rng: &mut ChaCha8Rng) -> Vec<Mat> {
        (0..n)
            .map(|_| {
                let mut m = Mat::zeros((rows, f));
                for v in m.iter_mut() {
                    *v = rng.random_range(-1.0..1.0);
                }
                m
            })
            .collect()
    }

    fn randomize(ctrl: &mut BiRecurrentController, rng: &mut ChaCha8Rng) {
        for p in ctrl.params_mut() {
            for v in p.iter_mut() {
                *v = rng.random_range(-0.4..0.4);
            }
        }
    }

    #[test]
    fn zero_head_gives_zero_controls_for_any_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ctrl = BiRecurrentController::new(5, 8, 2, &mut rng);
        for n in [2, 3, 7] {
            let feats = random_features(n, 4, 5, &mut rng);
            let out = ctrl.forward(&feats).unwrap();
            assert_eq!(out.dim(), (4, n));
            assert!(out.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn parameter_count_is_site_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ctrl = BiRecurrentController::new(5, 8, 2, &mut rng);
        let count: usize = ctrl.params().iter().map(|p| p.len()).sum();
        // nothing in the construction saw a chain length; evaluating at
        // different N must reuse exactly these parameters
        let feats3 = random_features(3, 2, 5, &mut rng);
        let feats9 = random_features(9, 2, 5, &mut rng);
        ctrl.forward(&feats3).unwrap();
        ctrl.forward(&feats9).unwrap();
        assert_eq!(count, ctrl.params().iter().map(|p| p.len()).sum::<usize>());
    }

    #[test]
    fn trained_size_evaluates_on_larger_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut ctrl = BiRecurrentController::new(5, 6, 2, &mut rng);
        randomize(&mut ctrl, &mut rng);
        let feats = random_features(7, 3, 5, &mut rng);
        let out = ctrl.forward(&feats).unwrap();
        assert_eq!(out.dim(), (3, 7));
        assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn wrong_feature_width_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ctrl = BiRecurrentController::new(5, 4, 2, &mut rng);
        let feats = random_features(3, 2, 4, &mut rng);
        assert!(ctrl.forward(&feats).is_err());
    }

    #[test]
    fn mirrored_input_swaps_scan_roles_exactly() {
        // brute-force reflection check on random weights, N=3
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut ctrl = BiRecurrentController::new(5, 4, 2, &mut rng);
        randomize(&mut ctrl, &mut rng);
        let feats = random_features(3, 2, 5, &mut rng);
        let mirrored: Vec<Mat> = feats.iter().rev().cloned().collect();

        let n = feats.len();
        // output of the mirrored input with the normal head
        let out_mirror = ctrl.forward(&mirrored).unwrap();
        // network with swapped scan directions applied to the original input
        let fwd = ctrl.scan(&feats, false);
        let bwd = ctrl.scan(&feats, true);
        let mut out_swapped = Mat::zeros(out_mirror.raw_dim());
        for i in 0..n {
            let joined =
                ndarray::concatenate(ndarray::Axis(1), &[bwd[i].view(), fwd[i].view()]).unwrap();
            let y = joined.dot(&ctrl.head_w) + &ctrl.head_b.broadcast((2, 1)).unwrap();
            out_swapped.column_mut(i).assign(&y.column(0));
        }
        for i in 0..n {
            for r in 0..2 {
                assert_abs_diff_eq!(
                    out_mirror[(r, i)],
                    out_swapped[(r, n - 1 - i)],
                    epsilon = 1e-13
                );
            }
        }
    }

    #[test]
    fn taped_forward_matches_pure_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut ctrl = BiRecurrentController::new(5, 4, 2, &mut rng);
        randomize(&mut ctrl, &mut rng);
        let feats = random_features(4, 3, 5, &mut rng);
        let pure = ctrl.forward(&feats).unwrap();

        let mut tape = Tape::new();
        let taped = ctrl.register(&mut tape);
        let ids: Vec<NodeId> = feats.iter().map(|f| tape.leaf(f.clone())).collect();
        let out = taped.forward(&mut tape, &ids);
        for (a, b) in pure.iter().zip(tape.value(out).iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn cell_weight_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let mut ctrl = BiRecurrentController::new(5, 3, 2, &mut rng);
        randomize(&mut ctrl, &mut rng);
        let feats = random_features(3, 2, 5, &mut rng);

        let loss_of = |c: &BiRecurrentController| -> f64 { c.forward(&feats).unwrap().sum() };

        let mut tape = Tape::new();
        let taped = ctrl.register(&mut tape);
        let ids: Vec<NodeId> = feats.iter().map(|f| tape.leaf(f.clone())).collect();
        let out = taped.forward(&mut tape, &ids);
        let loss = tape.sum_all(out);
        tape.backward(loss).unwrap();

        let h = 1e-5;
        for (pi, id) in taped.param_ids().iter().enumerate() {
            let analytic = tape.grad(*id);
            // spot-check a handful of entries per parameter
            let shape = analytic.dim();
            let picks = [(0, 0), (shape.0 - 1, shape.1 - 1), (shape.0 / 2, shape.1 / 2)];
            for &(r, c) in &picks {
                let mut plus = ctrl.clone();
                *plus.params_mut()[pi].get_mut((r, c)).unwrap() += h;
                let mut minus = ctrl.clone();
                *minus.params_mut()[pi].get_mut((r, c)).unwrap() -= h;
                let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
                let a = analytic[(r, c)];
                let denom = a.abs().max(fd.abs()).max(1e-6);
                assert!(
                    (a - fd).abs() / denom < 1e-5,
                    "param {pi} entry ({r},{c}): analytic {a} vs fd {fd}"
                );
            }
        }
    }
}
