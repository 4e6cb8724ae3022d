//! Time-grid construction and Euler-Maruyama propagation of controlled
//! paths, accumulating the running cost
//!
//! ```text
//! sum_k [ V(x_k) + |u(x_k, t_k)|^2 / 2 ] dt_k  +  u(x_k, t_k) . dW_k
//! ```
//!
//! in the Ito (left-endpoint) convention. Under this discretization the
//! change of measure between the controlled and uncontrolled chains is
//! exact for any drift, so controlled estimators stay unbiased step for
//! step, not just in the continuum limit.

use ndarray::{Array1, Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::control::ControlFunction;
use crate::error::{Error, Result};
use crate::model::{circular_displacement, potential_energy_unchecked, wrap, Geometry, ModelSystem};
use crate::nn::Mat;

/// RNG stream domains; kept disjoint so path noise, boundary sampling and
/// per-epoch training draws never collide for one base seed.
pub const DOMAIN_PATH: u64 = 1;
pub const DOMAIN_BOUNDARY: u64 = 2;
pub const DOMAIN_TRAIN: u64 = 3;
pub const DOMAIN_BOOTSTRAP: u64 = 4;

/// Independent stream for one (seed, domain, index) triple. Results are a
/// function of indices only, never of worker count or scheduling.
pub fn stream_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((domain << 56) ^ index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridScheme {
    Uniform,
    /// dt_k proportional to (K - k): finer resolution toward t = T where
    /// the bridge drift varies fastest.
    LinearlyDecreasing,
}

/// Discretized imaginary-time axis on [0, T].
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    /// (t_k, dt_k) pairs, k = 0..K-1.
    steps: Vec<(f64, f64)>,
    total: f64,
    scheme: GridScheme,
}

impl TimeGrid {
    pub fn new(total_time: f64, num_steps: usize, scheme: GridScheme) -> Result<Self> {
        if num_steps < 2 {
            return Err(Error::Config(format!(
                "time grid needs K >= 2 steps, got {num_steps}"
            )));
        }
        if !(total_time > 0.0) {
            return Err(Error::Config(format!(
                "time grid needs T > 0, got {total_time}"
            )));
        }
        let k = num_steps as f64;
        let mut steps = Vec::with_capacity(num_steps);
        let mut t = 0.0;
        for i in 0..num_steps {
            let dt = match scheme {
                GridScheme::Uniform => total_time / k,
                GridScheme::LinearlyDecreasing => 2.0 * total_time * (k - i as f64) / (k * (k + 1.0)),
            };
            steps.push((t, dt));
            t += dt;
        }
        Ok(TimeGrid {
            steps,
            total: total_time,
            scheme,
        })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn total_time(&self) -> f64 {
        self.total
    }

    pub fn scheme(&self) -> GridScheme {
        self.scheme
    }

    pub fn steps(&self) -> &[(f64, f64)] {
        &self.steps
    }

    pub fn label(&self) -> String {
        match self.scheme {
            GridScheme::Uniform => format!("uniform:{}", self.len()),
            GridScheme::LinearlyDecreasing => format!("linear:{}", self.len()),
        }
    }
}

/// A batch of discretized trajectories with per-path accumulated costs.
#[derive(Debug, Clone)]
pub struct PathBatch {
    /// `[batch, K+1, dim]` positions; torus entries stay in [-pi, pi).
    pub positions: Array3<f64>,
    /// `[batch, K, dim]` noise increments already scaled by sqrt(dt_k).
    pub noises: Array3<f64>,
    /// Running cost per path: the V, u^2/2 and u.dW terms.
    pub cost_running: Array1<f64>,
    /// Smoothed -log delta endpoint term, filled by `apply_terminal_penalty`.
    pub cost_terminal: Array1<f64>,
    /// Paths that stayed finite all the way through.
    pub valid: Vec<bool>,
    pub invalid_count: usize,
}

impl PathBatch {
    pub fn batch_size(&self) -> usize {
        self.valid.len()
    }

    /// cost_running + cost_terminal for valid paths, NaN otherwise.
    pub fn total_cost(&self, path: usize) -> f64 {
        if self.valid[path] {
            self.cost_running[path] + self.cost_terminal[path]
        } else {
            f64::NAN
        }
    }

    /// Fill `cost_terminal` with the smoothed -log delta toward `target`.
    pub fn apply_terminal_penalty(
        &mut self,
        target: &[f64],
        epsilon: f64,
        geometry: Geometry,
    ) -> Result<()> {
        let steps = self.positions.dim().1 - 1;
        for b in 0..self.batch_size() {
            if !self.valid[b] {
                continue;
            }
            let end: Vec<f64> = self.positions.slice(ndarray::s![b, steps, ..]).to_vec();
            self.cost_terminal[b] = terminal_penalty(&end, target, epsilon, geometry)?;
        }
        Ok(())
    }
}

/// -log of the Gaussian-smoothed delta:
/// |d|^2 / (2 eps^2) + (n/2) log(2 pi eps^2), d the geometry displacement.
pub fn terminal_penalty(
    x_end: &[f64],
    x_target: &[f64],
    epsilon: f64,
    geometry: Geometry,
) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!(
            "terminal smoothing width must be > 0, got {epsilon}"
        )));
    }
    let d = circular_displacement(geometry, x_end, x_target)?;
    let sq: f64 = d.iter().map(|v| v * v).sum();
    let n = x_end.len() as f64;
    Ok(sq / (2.0 * epsilon * epsilon) + 0.5 * n * (2.0 * std::f64::consts::PI * epsilon * epsilon).ln())
}

/// Standard-normal increments scaled by sqrt(dt_k): `[batch, K, dim]`.
/// Path `i` draws from stream `path_offset + i`, so any chunking of a batch
/// reproduces the same trajectories.
pub fn sample_noises(
    grid: &TimeGrid,
    batch: usize,
    dim: usize,
    seed: u64,
    domain: u64,
    path_offset: u64,
) -> Array3<f64> {
    let k = grid.len();
    let mut noises = Array3::zeros((batch, k, dim));
    let sqrt_dt: Vec<f64> = grid.steps().iter().map(|&(_, dt)| dt.sqrt()).collect();
    for b in 0..batch {
        let mut rng = stream_rng(seed, domain, path_offset + b as u64);
        for step in 0..k {
            for j in 0..dim {
                let xi: f64 = StandardNormal.sample(&mut rng);
                noises[[b, step, j]] = xi * sqrt_dt[step];
            }
        }
    }
    noises
}

/// Euler-Maruyama propagation of `batch` paths from `x0` with drift from
/// `control` (zero drift when `None`), accumulating the running cost.
pub fn propagate(
    system: &ModelSystem,
    grid: &TimeGrid,
    x0: &[f64],
    control: Option<&ControlFunction>,
    batch: usize,
    seed: u64,
) -> Result<PathBatch> {
    propagate_offset(system, grid, x0, control, batch, seed, 0)
}

/// As [`propagate`] with an explicit RNG path offset, so large batches can
/// be generated in chunks without changing any trajectory.
pub fn propagate_offset(
    system: &ModelSystem,
    grid: &TimeGrid,
    x0: &[f64],
    control: Option<&ControlFunction>,
    batch: usize,
    seed: u64,
    path_offset: u64,
) -> Result<PathBatch> {
    let noises = sample_noises(grid, batch, system.dim(), seed, DOMAIN_PATH, path_offset);
    propagate_with_noises(system, grid, x0, control, &noises)
}

/// Propagation from externally supplied (already sqrt(dt)-scaled) noise
/// increments. Training reuses this with frozen noise.
pub fn propagate_with_noises(
    system: &ModelSystem,
    grid: &TimeGrid,
    x0: &[f64],
    control: Option<&ControlFunction>,
    noises: &Array3<f64>,
) -> Result<PathBatch> {
    let dim = system.dim();
    if x0.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: x0.len(),
        });
    }
    if let Some(ctrl) = control {
        if ctrl.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: ctrl.dim(),
            });
        }
    }
    let (batch, k_noise, dim_noise) = noises.dim();
    if k_noise != grid.len() || dim_noise != dim {
        return Err(Error::Config(format!(
            "noise shape {:?} does not match grid K={} dim={}",
            noises.dim(),
            grid.len(),
            dim
        )));
    }
    let total_time = grid.total_time();
    let start = wrap(system.geometry, x0);

    let mut positions = Array3::zeros((batch, grid.len() + 1, dim));
    let mut x = Mat::zeros((batch, dim));
    for b in 0..batch {
        for j in 0..dim {
            x[(b, j)] = start[j];
            positions[[b, 0, j]] = start[j];
        }
    }
    let mut cost_running = Array1::zeros(batch);
    let mut valid = vec![true; batch];

    for (step, &(t_k, dt)) in grid.steps().iter().enumerate() {
        let drift = match control {
            Some(ctrl) => Some(ctrl.evaluate_batch(&x, t_k, total_time)?),
            None => None,
        };
        for b in 0..batch {
            if !valid[b] {
                continue;
            }
            let row = x.row(b);
            let xr = row.as_slice().expect("row-major batch");
            let v = potential_energy_unchecked(system, xr);
            let mut u_sq = 0.0;
            let mut u_dw = 0.0;
            let mut bad = false;
            if let Some(u) = &drift {
                for j in 0..dim {
                    let uj = u[(b, j)];
                    if !uj.is_finite() {
                        bad = true;
                        break;
                    }
                    u_sq += uj * uj;
                    u_dw += uj * noises[[b, step, j]];
                }
            }
            if bad || !v.is_finite() {
                valid[b] = false;
                cost_running[b] = f64::NAN;
                continue;
            }
            cost_running[b] += (v + 0.5 * u_sq) * dt + u_dw;
            for j in 0..dim {
                let mut next = x[(b, j)] + noises[[b, step, j]];
                if let Some(u) = &drift {
                    next += u[(b, j)] * dt;
                }
                if system.geometry.is_torus() {
                    next = crate::model::wrap_angle(next);
                }
                if !next.is_finite() {
                    valid[b] = false;
                    cost_running[b] = f64::NAN;
                    break;
                }
                x[(b, j)] = next;
                positions[[b, step + 1, j]] = next;
            }
        }
    }

    let invalid_count = valid.iter().filter(|v| !**v).count();
    Ok(PathBatch {
        positions,
        noises: noises.clone(),
        cost_running,
        cost_terminal: Array1::zeros(batch),
        valid,
        invalid_count,
    })
}

/// Per-component sample variance of the endpoints of a batch.
pub fn endpoint_variance(batch: &PathBatch) -> Vec<f64> {
    let (b, steps, dim) = batch.positions.dim();
    let last = batch.positions.index_axis(Axis(1), steps - 1);
    (0..dim)
        .map(|j| {
            let col: Vec<f64> = (0..b).filter(|&p| batch.valid[p]).map(|p| last[[p, j]]).collect();
            let (_, std) = crate::stats::mean_std(&col);
            std * std
        })
        .collect()
}
