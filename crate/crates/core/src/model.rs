//! Physical systems: potential energy, configuration-space geometry and
//! coupling parameters. Everything downstream (path generation, controls,
//! estimators, oracles) consumes these definitions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Configuration-space geometry. Torus coordinates are stored in [-pi, pi).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Geometry {
    /// Flat R^n.
    Cartesian { dim: usize },
    /// N angles on a circle, one per chain site.
    Torus { sites: usize },
}

impl Geometry {
    pub fn dim(&self) -> usize {
        match *self {
            Geometry::Cartesian { dim } => dim,
            Geometry::Torus { sites } => sites,
        }
    }

    pub fn is_torus(&self) -> bool {
        matches!(self, Geometry::Torus { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Geometry::Cartesian { dim } if dim >= 1 => Ok(()),
            Geometry::Cartesian { dim } => Err(Error::Config(format!(
                "Cartesian geometry needs dim >= 1, got {dim}"
            ))),
            Geometry::Torus { sites } if sites >= 2 => Ok(()),
            Geometry::Torus { sites } => Err(Error::Config(format!(
                "Torus geometry needs at least 2 sites, got {sites}"
            ))),
        }
    }
}

/// Rotor chain bond layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainBoundary {
    /// N-1 nearest-neighbour bonds.
    Open,
    /// N bonds, the last one closing the ring.
    Periodic,
}

/// Potential energy families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Potential {
    /// V = 0; the free-particle baseline every kernel benchmark starts from.
    Free,
    /// V(x) = x^2/2 + lambda x^4 on Cartesian(1).
    AnharmonicOscillator { lambda: f64 },
    /// Softcore attractive Coulomb, V(x) = -1/max(|x|, r_cut), on Cartesian(3).
    Coulomb { r_cut: f64 },
    /// -J sum over bonds of cos(theta_i - theta_j) on Torus(N).
    RotorChain { coupling: f64, boundary: ChainBoundary },
}

/// Default softcore radius: the bare -1/|x| makes discretized path costs
/// unbounded below near the origin.
pub const DEFAULT_COULOMB_R_CUT: f64 = 1e-3;

/// A potential plus the geometry it lives on, at inverse temperature beta.
/// The total path duration T always equals beta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSystem {
    pub geometry: Geometry,
    pub potential: Potential,
    pub beta: f64,
}

impl ModelSystem {
    pub fn new(geometry: Geometry, potential: Potential, beta: f64) -> Result<Self> {
        let system = ModelSystem {
            geometry,
            potential,
            beta,
        };
        system.validate()?;
        Ok(system)
    }

    pub fn anharmonic_oscillator(lambda: f64, beta: f64) -> Result<Self> {
        Self::new(
            Geometry::Cartesian { dim: 1 },
            Potential::AnharmonicOscillator { lambda },
            beta,
        )
    }

    pub fn coulomb(r_cut: f64, beta: f64) -> Result<Self> {
        Self::new(Geometry::Cartesian { dim: 3 }, Potential::Coulomb { r_cut }, beta)
    }

    pub fn free_particle(dim: usize, beta: f64) -> Result<Self> {
        Self::new(Geometry::Cartesian { dim }, Potential::Free, beta)
    }

    pub fn rotor_chain(sites: usize, coupling: f64, boundary: ChainBoundary, beta: f64) -> Result<Self> {
        Self::new(
            Geometry::Torus { sites },
            Potential::RotorChain { coupling, boundary },
            beta,
        )
    }

    /// Total imaginary-time extent of every path.
    pub fn total_time(&self) -> f64 {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if !(self.beta > 0.0) {
            return Err(Error::Config(format!("beta must be > 0, got {}", self.beta)));
        }
        match (self.potential, self.geometry) {
            (Potential::Free, _) => Ok(()),
            (Potential::AnharmonicOscillator { lambda }, Geometry::Cartesian { dim: 1 }) => {
                if lambda < 0.0 {
                    return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
                }
                Ok(())
            }
            (Potential::AnharmonicOscillator { .. }, _) => Err(Error::Config(
                "anharmonic oscillator requires Cartesian(1)".into(),
            )),
            (Potential::Coulomb { r_cut }, Geometry::Cartesian { dim: 3 }) => {
                if !(r_cut > 0.0) {
                    return Err(Error::Config(format!("r_cut must be > 0, got {r_cut}")));
                }
                Ok(())
            }
            (Potential::Coulomb { .. }, _) => {
                Err(Error::Config("Coulomb requires Cartesian(3)".into()))
            }
            (Potential::RotorChain { coupling, .. }, Geometry::Torus { .. }) => {
                if coupling < 0.0 {
                    return Err(Error::Config(format!("J must be >= 0, got {coupling}")));
                }
                Ok(())
            }
            (Potential::RotorChain { .. }, _) => {
                Err(Error::Config("rotor chain requires Torus geometry".into()))
            }
        }
    }

    /// Bond list of the rotor chain; empty for other potentials.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        match (self.potential, self.geometry) {
            (Potential::RotorChain { boundary, .. }, Geometry::Torus { sites }) => {
                let mut bonds: Vec<(usize, usize)> = (0..sites - 1).map(|i| (i, i + 1)).collect();
                if boundary == ChainBoundary::Periodic {
                    bonds.push((sites - 1, 0));
                }
                bonds
            }
            _ => Vec::new(),
        }
    }
}

/// Reduce one angle to [-pi, pi), left-closed.
#[inline]
pub fn wrap_angle(theta: f64) -> f64 {
    let wrapped = theta - TWO_PI * ((theta + std::f64::consts::PI) / TWO_PI).floor();
    // floor arithmetic can land exactly on +pi for inputs like -pi - 2^-52
    if wrapped >= std::f64::consts::PI {
        wrapped - TWO_PI
    } else {
        wrapped
    }
}

/// Componentwise reduction to the geometry's fundamental domain.
/// Identity on Cartesian space; idempotent.
pub fn wrap(geometry: Geometry, x: &[f64]) -> Vec<f64> {
    match geometry {
        Geometry::Cartesian { .. } => x.to_vec(),
        Geometry::Torus { .. } => x.iter().map(|&t| wrap_angle(t)).collect(),
    }
}

/// Minimal signed displacement from `b` to `a`: `a - b` on Cartesian space,
/// the shortest arc on the torus.
pub fn circular_displacement(geometry: Geometry, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    match geometry {
        Geometry::Cartesian { .. } => Ok(a.iter().zip(b).map(|(x, y)| x - y).collect()),
        Geometry::Torus { .. } => Ok(a.iter().zip(b).map(|(x, y)| wrap_angle(x - y)).collect()),
    }
}

/// Evaluate V(x) for the system's potential.
pub fn potential_energy(system: &ModelSystem, x: &[f64]) -> Result<f64> {
    let dim = system.dim();
    if x.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: x.len(),
        });
    }
    Ok(potential_energy_unchecked(system, x))
}

/// Same as [`potential_energy`] without the dimension check; used in the
/// per-step hot loop where the batch shape is validated once up front.
#[inline]
pub fn potential_energy_unchecked(system: &ModelSystem, x: &[f64]) -> f64 {
    match system.potential {
        Potential::Free => 0.0,
        Potential::AnharmonicOscillator { lambda } => {
            let x = x[0];
            let x2 = x * x;
            0.5 * x2 + lambda * x2 * x2
        }
        Potential::Coulomb { r_cut } => {
            let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
            -1.0 / r.max(r_cut)
        }
        Potential::RotorChain { coupling, boundary } => {
            let n = x.len();
            let mut sum = 0.0;
            for i in 0..n - 1 {
                sum += (x[i] - x[i + 1]).cos();
            }
            if boundary == ChainBoundary::Periodic {
                sum += (x[n - 1] - x[0]).cos();
            }
            -coupling * sum
        }
    }
}
