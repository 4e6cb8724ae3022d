//! Independent ground-truth computations backing the benchmark suite:
//! exact diagonalization for 1D potentials and small rotor chains, plus
//! closed-form kernels. No code here touches the sampler path; the only
//! shared dependency is the model definitions.

pub mod cache;
pub mod ed1d;
mod jacobi;
pub mod kernels;
pub mod rotor;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::logsumexp;

pub use cache::OracleCache;
pub use ed1d::{ed_1d, Ed1dConfig};
pub use kernels::{analytic_kernel, KernelKind};
pub use rotor::{ed_rotor, RotorSolution};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum BasisMeta {
    Grid {
        extent: f64,
        spacing: f64,
        points: usize,
    },
    Momentum {
        m_max: i32,
        sites: usize,
    },
}

/// Eigenpairs of one Hamiltonian, energies ascending. Wavefunctions are
/// grid samples (1D) or full-basis coefficient vectors (rotor); either way
/// they are orthonormal under the basis inner product.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralSolution {
    pub energies: Vec<f64>,
    pub wavefunctions: Vec<Vec<f64>>,
    pub basis: BasisMeta,
}

impl SpectralSolution {
    /// F = -(1/beta) log sum_n exp(-beta E_n) over the resolved states,
    /// together with the truncation bound exp(-beta E_last).
    pub fn free_energy(&self, beta: f64) -> (f64, f64) {
        let logs: Vec<f64> = self.energies.iter().map(|e| -beta * e).collect();
        let f = -logsumexp(&logs) / beta;
        let bound = (-beta * self.energies.last().copied().unwrap_or(f64::INFINITY)).exp();
        (f, bound)
    }

    /// Unnormalized thermal diagonal rho_beta(x, x) = sum_n e^{-beta E_n}
    /// |psi_n(x)|^2, linearly interpolated between grid points.
    pub fn diagonal_density_at(&self, beta: f64, x: f64) -> Result<f64> {
        let (extent, spacing, points) = match self.basis {
            BasisMeta::Grid {
                extent,
                spacing,
                points,
            } => (extent, spacing, points),
            _ => {
                return Err(Error::Config(
                    "diagonal density needs a grid-basis solution".into(),
                ))
            }
        };
        let pos = (x + extent) / spacing - 1.0;
        if pos < 0.0 || pos > (points - 1) as f64 {
            return Err(Error::Config(format!(
                "x = {x} outside the ED grid [-{extent}, {extent}]"
            )));
        }
        let i = (pos.floor() as usize).min(points - 2);
        let frac = pos - i as f64;
        let mut total = 0.0;
        for (e, psi) in self.energies.iter().zip(&self.wavefunctions) {
            let p = psi[i] * (1.0 - frac) + psi[i + 1] * frac;
            total += (-beta * e).exp() * p * p;
        }
        Ok(total)
    }

    /// Worst deviation of the Gram matrix from identity.
    pub fn gram_deviation(&self) -> f64 {
        let weight = match self.basis {
            BasisMeta::Grid { spacing, .. } => spacing,
            BasisMeta::Momentum { .. } => 1.0,
        };
        let mut worst: f64 = 0.0;
        for (a, pa) in self.wavefunctions.iter().enumerate() {
            for (b, pb) in self.wavefunctions.iter().enumerate() {
                let dot: f64 = pa.iter().zip(pb).map(|(x, y)| x * y).sum::<f64>() * weight;
                let expected = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - expected).abs());
            }
        }
        worst
    }
}
