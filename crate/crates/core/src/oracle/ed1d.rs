//! Finite-difference exact diagonalization of 1D confining potentials.
//!
//! The central-difference Hamiltonian on a uniform grid over [-L, L] with
//! Dirichlet walls is symmetric tridiagonal; the lowest states are found by
//! Sturm-sequence bisection plus inverse iteration, independent of any code
//! on the sampler side.

use serde::{Deserialize, Serialize};

use super::{BasisMeta, SpectralSolution};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Ed1dConfig {
    /// Half-width L of the grid domain [-L, L].
    pub extent: f64,
    /// Number of interior grid points.
    pub points: usize,
    /// Number of low-lying states to resolve.
    pub n_states: usize,
    /// Maximum allowed drift of any resolved energy under refinement.
    pub tol: f64,
}

impl Default for Ed1dConfig {
    fn default() -> Self {
        Ed1dConfig {
            extent: 10.0,
            points: 2000,
            n_states: 48,
            tol: 1e-6,
        }
    }
}

/// Diagonalize H = -(1/2) d^2/dx^2 + V(x). The spectrum is computed at the
/// configured resolution, at doubled point count and at 1.5x extent; if any
/// kept energy moves by more than `tol` the solve is rejected.
pub fn ed_1d(potential: &dyn Fn(f64) -> f64, cfg: &Ed1dConfig) -> Result<SpectralSolution> {
    let coarse = solve_grid(potential, cfg.extent, cfg.points, cfg.n_states)?;
    let fine = solve_grid(potential, cfg.extent, cfg.points * 2, cfg.n_states)?;
    let wide = solve_grid(potential, 1.5 * cfg.extent, (cfg.points * 3) / 2, cfg.n_states)?;
    for n in 0..cfg.n_states {
        let drift_g = (coarse.energies[n] - fine.energies[n]).abs();
        let drift_l = (fine.energies[n] - wide.energies[n]).abs();
        if drift_g.max(drift_l) > cfg.tol {
            return Err(Error::NonConvergence(format!(
                "1d spectrum not converged: state {n} moved by {drift_g:.3e} (grid) / {drift_l:.3e} (extent)"
            )));
        }
    }
    Ok(fine)
}

fn solve_grid(
    potential: &dyn Fn(f64) -> f64,
    extent: f64,
    points: usize,
    n_states: usize,
) -> Result<SpectralSolution> {
    if points < 8 || n_states == 0 || n_states >= points {
        return Err(Error::Config(format!(
            "ed_1d needs 8 <= n_states < points, got points={points}, n_states={n_states}"
        )));
    }
    let h = 2.0 * extent / (points + 1) as f64;
    let xs: Vec<f64> = (0..points).map(|i| -extent + (i + 1) as f64 * h).collect();
    let kin = 1.0 / (h * h);
    let diag: Vec<f64> = xs.iter().map(|&x| kin + potential(x)).collect();
    let offdiag = vec![-0.5 * kin; points - 1];

    let energies = lowest_eigenvalues(&diag, &offdiag, n_states);
    let mut wavefunctions = Vec::with_capacity(n_states);
    for &e in &energies {
        let mut v = inverse_iteration(&diag, &offdiag, e);
        // normalize under the discrete inner product: sum psi^2 h = 1
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt() * h.sqrt();
        for x in v.iter_mut() {
            *x /= norm;
        }
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-8) {
            if *first < 0.0 {
                for x in v.iter_mut() {
                    *x = -*x;
                }
            }
        }
        wavefunctions.push(v);
    }

    Ok(SpectralSolution {
        energies,
        wavefunctions,
        basis: BasisMeta::Grid {
            extent,
            spacing: h,
            points,
        },
    })
}

/// Number of eigenvalues of the tridiagonal matrix strictly below `x`.
fn sturm_count(diag: &[f64], offdiag: &[f64], x: f64) -> usize {
    let pivmin = 1e-300;
    let mut count = 0;
    let mut q = diag[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..diag.len() {
        if q.abs() < pivmin {
            q = -pivmin;
        }
        q = diag[i] - x - offdiag[i - 1] * offdiag[i - 1] / q;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn lowest_eigenvalues(diag: &[f64], offdiag: &[f64], n_states: usize) -> Vec<f64> {
    let n = diag.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i == 0 { 0.0 } else { offdiag[i - 1].abs() }
            + if i + 1 < n { offdiag[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    (0..n_states)
        .map(|k| {
            let (mut a, mut b) = (lo, hi);
            while b - a > 1e-13 * b.abs().max(a.abs()).max(1.0) {
                let mid = 0.5 * (a + b);
                if sturm_count(diag, offdiag, mid) > k {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}

/// A few rounds of shifted inverse iteration. The 1D spectrum is simple,
/// so no reorthogonalization is needed.
fn inverse_iteration(diag: &[f64], offdiag: &[f64], energy: f64) -> Vec<f64> {
    let n = diag.len();
    let scale = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let shift = energy + 1e-11 * scale.max(1.0);
    // deterministic pseudo-random start vector
    let mut v: Vec<f64> = (0..n)
        .map(|i| {
            let u = (i as u64)
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((u >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
        .collect();
    for _ in 0..3 {
        v = solve_shifted_tridiagonal(diag, offdiag, shift, &v);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    v
}

/// Solve (T - shift I) x = b with partial pivoting (LU with one fill-in
/// superdiagonal, the dgttrf scheme).
fn solve_shifted_tridiagonal(diag: &[f64], offdiag: &[f64], shift: f64, b: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut d: Vec<f64> = diag.iter().map(|v| v - shift).collect();
    let mut du: Vec<f64> = offdiag.to_vec();
    let dl: Vec<f64> = offdiag.to_vec();
    let mut du2 = vec![0.0; n.saturating_sub(2)];
    let mut rhs = b.to_vec();

    for i in 0..n - 1 {
        if d[i].abs() >= dl[i].abs() {
            if d[i] == 0.0 {
                d[i] = 1e-300;
            }
            let fact = dl[i] / d[i];
            d[i + 1] -= fact * du[i];
            rhs[i + 1] -= fact * rhs[i];
        } else {
            let fact = d[i] / dl[i];
            d[i] = dl[i];
            let tmp = d[i + 1];
            d[i + 1] = du[i] - fact * tmp;
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] = -fact * du[i + 1];
            }
            du[i] = tmp;
            rhs.swap(i, i + 1);
            rhs[i + 1] -= fact * rhs[i];
        }
    }

    let mut x = vec![0.0; n];
    if d[n - 1] == 0.0 {
        d[n - 1] = 1e-300;
    }
    x[n - 1] = rhs[n - 1] / d[n - 1];
    if n >= 2 {
        x[n - 2] = (rhs[n - 2] - du[n - 2] * x[n - 1]) / d[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        x[i] = (rhs[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i];
    }
    x
}
