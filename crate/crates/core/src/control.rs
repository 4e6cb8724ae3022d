//! The full drift control: a Brownian-bridge steering term toward the
//! endpoint plus an optional neural residual, conditioned on the endpoint.
//!
//! On the torus the bridge displacement acts along the shortest arc and the
//! residual only ever sees (sin, cos) encodings, so the control is exactly
//! 2*pi-periodic in every angle.

use std::sync::Arc;

use ndarray::Axis;

use crate::error::{Error, Result};
use crate::model::{circular_displacement, wrap_angle, Geometry};
use crate::nn::{ControllerKind, Mat, NodeId, Tape, TapedBiRecurrent, TapedMlp};

/// Default bridge regularizer as a fraction of the total time. Separate
/// from the terminal-penalty width: this one regularizes the 1/(T-t)
/// divergence of the drift, not the endpoint delta.
pub const DEFAULT_EPSILON_T_FRACTION: f64 = 1e-3;

/// Drift u(x, t | z): bridge term plus neural residual.
#[derive(Clone)]
pub struct ControlFunction {
    pub geometry: Geometry,
    pub bridge_enabled: bool,
    /// Regularizer in the bridge denominator T - t + epsilon_t.
    pub epsilon_t: f64,
    pub residual: Option<Arc<ControllerKind>>,
    /// Conditioning endpoint x_T.
    pub z: Vec<f64>,
    /// Feed t/T rather than raw t to the residual.
    pub normalize_time: bool,
}

impl ControlFunction {
    pub fn bridge_only(geometry: Geometry, z: Vec<f64>, total_time: f64) -> Self {
        ControlFunction {
            geometry,
            bridge_enabled: true,
            epsilon_t: DEFAULT_EPSILON_T_FRACTION * total_time,
            residual: None,
            z,
            normalize_time: true,
        }
    }

    pub fn with_residual(mut self, residual: Arc<ControllerKind>) -> Self {
        self.residual = Some(residual);
        self
    }

    /// Same control family retargeted at a new endpoint; the underlying
    /// network is shared, not copied.
    pub fn with_endpoint(&self, z: Vec<f64>) -> Self {
        let mut ctrl = self.clone();
        ctrl.z = z;
        ctrl
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    fn time_feature(&self, t: f64, total_time: f64) -> f64 {
        if self.normalize_time {
            t / total_time
        } else {
            t
        }
    }

    /// Residual network input width implied by geometry and endpoint.
    pub fn feature_width(&self) -> usize {
        match self.geometry {
            Geometry::Cartesian { dim } => 2 * dim + 1,
            Geometry::Torus { .. } => 5,
        }
    }

    /// Drift at a single configuration.
    pub fn evaluate(&self, x: &[f64], t: f64, total_time: f64) -> Result<Vec<f64>> {
        let rows = batch_from_rows(&[x.to_vec()]);
        let out = self.evaluate_batch(&rows, t, total_time)?;
        Ok(out.row(0).to_vec())
    }

    /// Drift for a batch of configurations `[rows, dim]`.
    pub fn evaluate_batch(&self, x: &Mat, t: f64, total_time: f64) -> Result<Mat> {
        if t >= total_time {
            return Err(Error::Config(format!(
                "control evaluated at t = {t} >= T = {total_time}"
            )));
        }
        let dim = self.z.len();
        if x.dim().1 != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: x.dim().1,
            });
        }
        let mut drift = Mat::zeros(x.raw_dim());
        if self.bridge_enabled {
            let inv = 1.0 / (total_time - t + self.epsilon_t);
            for (mut row, xrow) in drift.axis_iter_mut(Axis(0)).zip(x.axis_iter(Axis(0))) {
                for j in 0..dim {
                    let d = match self.geometry {
                        Geometry::Cartesian { .. } => self.z[j] - xrow[j],
                        Geometry::Torus { .. } => wrap_angle(self.z[j] - xrow[j]),
                    };
                    row[j] = d * inv;
                }
            }
        }
        if let Some(residual) = &self.residual {
            let tn = self.time_feature(t, total_time);
            let res = match (residual.as_ref(), self.geometry) {
                (ControllerKind::Mlp(mlp), Geometry::Cartesian { .. }) => {
                    mlp.forward(&features_cartesian(x, &self.z, tn))?
                }
                (ControllerKind::Mlp(mlp), Geometry::Torus { .. }) => {
                    // flattened periodic encoding, one 5-wide block per site
                    let sites = features_torus_sites(x, &self.z, tn);
                    let views: Vec<_> = sites.iter().map(|m| m.view()).collect();
                    mlp.forward(&ndarray::concatenate(Axis(1), &views).unwrap())?
                }
                (ControllerKind::BiRecurrent(net), Geometry::Torus { .. }) => {
                    net.forward(&features_torus_sites(x, &self.z, tn))?
                }
                (ControllerKind::BiRecurrent(_), Geometry::Cartesian { .. }) => {
                    return Err(Error::Config(
                        "site-recurrent controller requires torus geometry".into(),
                    ));
                }
            };
            if res.dim() != drift.dim() {
                return Err(Error::DimensionMismatch {
                    expected: drift.dim().1,
                    got: res.dim().1,
                });
            }
            drift += &res;
        }
        Ok(drift)
    }
}

pub fn batch_from_rows(rows: &[Vec<f64>]) -> Mat {
    let n = rows.first().map(|r| r.len()).unwrap_or(0);
    let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().cloned()).collect();
    Mat::from_shape_vec((rows.len(), n), flat).expect("row lengths must agree")
}

/// Residual input features at a single configuration: `[1, 2n+1]` on
/// Cartesian space, `[N, 5]` on the torus.
pub fn features(x: &[f64], z: &[f64], t: f64, total_time: f64, geometry: Geometry) -> Mat {
    let tn = t / total_time;
    match geometry {
        Geometry::Cartesian { .. } => {
            features_cartesian(&batch_from_rows(&[x.to_vec()]), z, tn)
        }
        Geometry::Torus { .. } => {
            let sites = features_torus_sites(&batch_from_rows(&[x.to_vec()]), z, tn);
            let mut out = Mat::zeros((sites.len(), 5));
            for (i, site) in sites.iter().enumerate() {
                out.row_mut(i).assign(&site.row(0));
            }
            out
        }
    }
}

/// `[rows, 2n+1]`: (x, z, t) with z and t broadcast across the batch.
pub fn features_cartesian(x: &Mat, z: &[f64], tn: f64) -> Mat {
    let (rows, dim) = x.dim();
    let mut out = Mat::zeros((rows, 2 * dim + 1));
    out.slice_mut(ndarray::s![.., 0..dim]).assign(x);
    for j in 0..dim {
        out.column_mut(dim + j).fill(z[j]);
    }
    out.column_mut(2 * dim).fill(tn);
    out
}

/// Per-site `[rows, 5]` blocks: (sin theta_i, cos theta_i, sin z_i, cos z_i, t).
pub fn features_torus_sites(x: &Mat, z: &[f64], tn: f64) -> Vec<Mat> {
    let (rows, sites) = x.dim();
    (0..sites)
        .map(|i| {
            let mut block = Mat::zeros((rows, 5));
            for r in 0..rows {
                block[(r, 0)] = x[(r, i)].sin();
                block[(r, 1)] = x[(r, i)].cos();
            }
            block.column_mut(2).fill(z[i].sin());
            block.column_mut(3).fill(z[i].cos());
            block.column_mut(4).fill(tn);
            block
        })
        .collect()
}

/// Tape-resident control for backpropagation through the SDE. Endpoint
/// z may differ per row (ensemble training), hence the `[rows, dim]`
/// constants.
pub struct TapedControl {
    geometry: Geometry,
    bridge_enabled: bool,
    epsilon_t: f64,
    normalize_time: bool,
    z_rows: NodeId,
    /// Precomputed (sin z, cos z) columns per site, torus only.
    z_trig: Vec<(NodeId, NodeId)>,
    residual: Option<TapedResidual>,
}

enum TapedResidual {
    Mlp(TapedMlp),
    BiRecurrent(TapedBiRecurrent),
}

impl TapedControl {
    /// Register the control on a tape for a batch whose row r targets
    /// endpoint `z_rows[r, ..]`.
    pub fn register(ctrl: &ControlFunction, tape: &mut Tape, z_rows: Mat) -> Result<Self> {
        let dim = z_rows.dim().1;
        let z_trig = if ctrl.geometry.is_torus() {
            (0..dim)
                .map(|j| {
                    let col = z_rows.column(j);
                    let sin = Mat::from_shape_vec(
                        (z_rows.dim().0, 1),
                        col.iter().map(|v| v.sin()).collect(),
                    )
                    .unwrap();
                    let cos = Mat::from_shape_vec(
                        (z_rows.dim().0, 1),
                        col.iter().map(|v| v.cos()).collect(),
                    )
                    .unwrap();
                    (tape.leaf(sin), tape.leaf(cos))
                })
                .collect()
        } else {
            Vec::new()
        };
        let z_node = tape.leaf(z_rows);
        let residual = match ctrl.residual.as_deref() {
            None => None,
            Some(ControllerKind::Mlp(mlp)) => Some(TapedResidual::Mlp(mlp.register(tape))),
            Some(ControllerKind::BiRecurrent(net)) => {
                if !ctrl.geometry.is_torus() {
                    return Err(Error::Config(
                        "site-recurrent controller requires torus geometry".into(),
                    ));
                }
                Some(TapedResidual::BiRecurrent(net.register(tape)))
            }
        };
        Ok(TapedControl {
            geometry: ctrl.geometry,
            bridge_enabled: ctrl.bridge_enabled,
            epsilon_t: ctrl.epsilon_t,
            normalize_time: ctrl.normalize_time,
            z_rows: z_node,
            z_trig,
            residual,
        })
    }

    pub fn param_ids(&self) -> Vec<NodeId> {
        match &self.residual {
            None => Vec::new(),
            Some(TapedResidual::Mlp(m)) => m.param_ids(),
            Some(TapedResidual::BiRecurrent(r)) => r.param_ids(),
        }
    }

    /// Drift node for state `x` at time `t`.
    pub fn drift(&self, tape: &mut Tape, x: NodeId, t: f64, total_time: f64) -> NodeId {
        let (rows, dim) = tape.value(x).dim();
        let mut drift: Option<NodeId> = None;
        if self.bridge_enabled {
            let raw = tape.sub(self.z_rows, x);
            let disp = if self.geometry.is_torus() {
                tape.wrap_angle(raw)
            } else {
                raw
            };
            let scaled = tape.scale(disp, 1.0 / (total_time - t + self.epsilon_t));
            drift = Some(scaled);
        }
        if let Some(residual) = &self.residual {
            let tn = if self.normalize_time { t / total_time } else { t };
            let res = match residual {
                TapedResidual::Mlp(mlp) => {
                    let feats = match self.geometry {
                        Geometry::Cartesian { .. } => {
                            let t_col = tape.leaf(Mat::from_elem((rows, 1), tn));
                            tape.concat_cols(&[x, self.z_rows, t_col])
                        }
                        Geometry::Torus { .. } => {
                            let sites = self.torus_site_features(tape, x, tn, dim);
                            tape.concat_cols(&sites)
                        }
                    };
                    mlp.forward(tape, feats)
                }
                TapedResidual::BiRecurrent(net) => {
                    let sites = self.torus_site_features(tape, x, tn, dim);
                    net.forward(tape, &sites)
                }
            };
            drift = Some(match drift {
                Some(d) => tape.add(d, res),
                None => res,
            });
        }
        drift.unwrap_or_else(|| tape.leaf(Mat::zeros((rows, dim))))
    }

    fn torus_site_features(&self, tape: &mut Tape, x: NodeId, tn: f64, dim: usize) -> Vec<NodeId> {
        let rows = tape.value(x).dim().0;
        let t_col = tape.leaf(Mat::from_elem((rows, 1), tn));
        (0..dim)
            .map(|j| {
                let theta = tape.slice_cols(x, j, j + 1);
                let sin = tape.sin(theta);
                let cos = tape.cos(theta);
                let (zs, zc) = self.z_trig[j];
                tape.concat_cols(&[sin, cos, zs, zc, t_col])
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::model::TWO_PI;
    use crate::nn::{BiRecurrentController, MlpController};

    const PI: f64 = std::f64::consts::PI;

    #[test]
    fn cartesian_bridge_drift_value() {
        let geo = Geometry::Cartesian { dim: 1 };
        let mut ctrl = ControlFunction::bridge_only(geo, vec![1.0], 1.0);
        ctrl.epsilon_t = 1e-3;
        let u = ctrl.evaluate(&[0.0], 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(u[0], 1.0 / 1.001, epsilon = 1e-12);
    }

    #[test]
    fn bridge_vanishes_at_target() {
        let geo = Geometry::Cartesian { dim: 2 };
        let ctrl = ControlFunction::bridge_only(geo, vec![0.4, -0.7], 2.0);
        let u = ctrl.evaluate(&[0.4, -0.7], 0.3, 2.0).unwrap();
        assert!(u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn torus_bridge_points_along_short_arc() {
        let geo = Geometry::Torus { sites: 1 };
        let mut ctrl = ControlFunction::bridge_only(geo, vec![3.0], 1.0);
        ctrl.epsilon_t = 1e-3;
        let u = ctrl.evaluate(&[-3.0], 0.0, 1.0).unwrap();
        let expected = -(TWO_PI - 6.0) / (1.0 + 1e-3);
        assert_abs_diff_eq!(u[0], expected, epsilon = 1e-12);
        assert!(u[0] < 0.0);
    }

    #[test]
    fn evaluation_at_or_past_total_time_errors() {
        let geo = Geometry::Cartesian { dim: 1 };
        let ctrl = ControlFunction::bridge_only(geo, vec![0.0], 1.0);
        assert!(ctrl.evaluate(&[0.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn feature_examples() {
        let torus = Geometry::Torus { sites: 1 };
        let f = features(&[0.0], &[PI / 2.0], 0.0, 1.0, torus);
        assert_abs_diff_eq!(f[(0, 0)], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f[(0, 1)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f[(0, 2)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f[(0, 3)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f[(0, 4)], 0.0, epsilon = 1e-15);

        let cart = Geometry::Cartesian { dim: 1 };
        let f = features(&[0.5], &[-0.2], 1.0, 1.0, cart);
        assert_eq!(f.dim(), (1, 3));
        assert_abs_diff_eq!(f[(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(f[(0, 1)], -0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(f[(0, 2)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn torus_features_invariant_under_winding() {
        let torus = Geometry::Torus { sites: 2 };
        let a = features(&[0.3, -1.2], &[0.1, 0.2], 0.5, 1.0, torus);
        let b = features(&[0.3 + TWO_PI, -1.2 - TWO_PI], &[0.1, 0.2], 0.5, 1.0, torus);
        for (x, y) in a.iter().zip(b.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn control_periodic_on_torus() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut net = BiRecurrentController::new(5, 4, 2, &mut rng);
        for p in net.params_mut() {
            for v in p.iter_mut() {
                *v = rng.random_range(-0.5..0.5);
            }
        }
        let geo = Geometry::Torus { sites: 3 };
        let ctrl = ControlFunction::bridge_only(geo, vec![0.2, -0.4, 1.1], 1.0)
            .with_residual(Arc::new(ControllerKind::BiRecurrent(net)));
        let theta = vec![0.5, -2.0, 2.5];
        let shifted: Vec<f64> = theta.iter().map(|t| t + TWO_PI).collect();
        let u0 = ctrl.evaluate(&theta, 0.2, 1.0).unwrap();
        let u1 = ctrl.evaluate(&shifted, 0.2, 1.0).unwrap();
        for (a, b) in u0.iter().zip(&u1) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_initialized_residual_equals_pure_bridge() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = MlpController::new(3, &[16, 16], 1, &mut rng);
        let geo = Geometry::Cartesian { dim: 1 };
        let bare = ControlFunction::bridge_only(geo, vec![0.7], 1.0);
        let with_net = bare
            .clone()
            .with_residual(Arc::new(ControllerKind::Mlp(mlp)));
        for &(x, t) in &[(0.0, 0.0), (0.4, 0.3), (-1.3, 0.9)] {
            let a = bare.evaluate(&[x], t, 1.0).unwrap();
            let b = with_net.evaluate(&[x], t, 1.0).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn same_network_reusable_across_start_points() {
        // fixed z, shared residual: distinct starting configurations are
        // served by one ControlFunction instance
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut mlp = MlpController::new(3, &[8], 1, &mut rng);
        for p in mlp.params_mut() {
            for v in p.iter_mut() {
                *v = rng.random_range(-0.3..0.3);
            }
        }
        let geo = Geometry::Cartesian { dim: 1 };
        let ctrl = ControlFunction::bridge_only(geo, vec![1.0], 1.0)
            .with_residual(Arc::new(ControllerKind::Mlp(mlp)));
        let u_a = ctrl.evaluate(&[-0.5], 0.1, 1.0).unwrap();
        let u_b = ctrl.evaluate(&[0.8], 0.1, 1.0).unwrap();
        assert!(u_a[0].is_finite() && u_b[0].is_finite());
        assert_ne!(u_a[0], u_b[0]);
    }

    #[test]
    fn taped_drift_matches_pure_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mut net = BiRecurrentController::new(5, 4, 2, &mut rng);
        for p in net.params_mut() {
            for v in p.iter_mut() {
                *v = rng.random_range(-0.5..0.5);
            }
        }
        let geo = Geometry::Torus { sites: 3 };
        let z = vec![0.2, -0.4, 1.1];
        let ctrl = ControlFunction::bridge_only(geo, z.clone(), 1.0)
            .with_residual(Arc::new(ControllerKind::BiRecurrent(net)));
        let x = batch_from_rows(&[vec![0.5, -2.0, 2.5], vec![-0.3, 0.0, 3.0]]);
        let pure = ctrl.evaluate_batch(&x, 0.25, 1.0).unwrap();

        let mut tape = Tape::new();
        let z_rows = batch_from_rows(&[z.clone(), z]);
        let taped = TapedControl::register(&ctrl, &mut tape, z_rows).unwrap();
        let xid = tape.leaf(x);
        let drift = taped.drift(&mut tape, xid, 0.25, 1.0);
        for (a, b) in pure.iter().zip(tape.value(drift).iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }
}
