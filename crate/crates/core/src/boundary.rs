//! Importance-sampling distributions over closed-path boundary points
//! z = x_0 = x_T, with exact log-density evaluation. Densities are strictly
//! positive on the whole configuration space, which is what makes the trace
//! reweighting valid for any control.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{wrap_angle, TWO_PI};
use crate::sde::{stream_rng, DOMAIN_BOUNDARY};

/// Boundary proposal P(z).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BoundaryDistribution {
    /// Isotropic Gaussian from the Jensen-Feynman harmonic fit:
    /// z ~ N(0, s^2 I).
    JensenFeynmanGaussian {
        omega: f64,
        variance: f64,
        dim: usize,
    },
    /// z_1 uniform on the circle, then autoregressive wrapped-normal steps
    /// z_i = wrap(z_{i-1} + eta), eta ~ N(0, variance). An infinite variance
    /// degenerates to independent uniform angles (the J = 0 chain).
    WrappedAutoregressive { sites: usize, variance: f64 },
}

/// Thermal angular scale of the rotor chain: coth(beta sqrt(J)/2)/(2 sqrt(J)).
/// Diverges as J -> 0, where neighbours decouple completely.
pub fn rotor_sigma_sq(coupling: f64, beta: f64) -> f64 {
    if coupling <= 0.0 {
        return f64::INFINITY;
    }
    let sj = coupling.sqrt();
    coth(beta * sj / 2.0) / (2.0 * sj)
}

#[inline]
fn coth(x: f64) -> f64 {
    1.0 / x.tanh()
}

/// Trial-frequency variance s^2(omega) = coth(beta omega / 2) / (2 omega).
pub fn harmonic_diagonal_variance(omega: f64, beta: f64) -> f64 {
    coth(beta * omega / 2.0) / (2.0 * omega)
}

/// Solve the Jensen-Feynman stationarity condition
/// omega^2 = 1 + 12 lambda s^2(omega) for the anharmonic oscillator and
/// return the Gaussian boundary proposal N(0, s^2(omega)).
pub fn fit_jensen_feynman(lambda: f64, beta: f64) -> Result<BoundaryDistribution> {
    if lambda < 0.0 || !(beta > 0.0) {
        return Err(Error::Config(format!(
            "jensen-feynman fit needs lambda >= 0 and beta > 0, got lambda={lambda}, beta={beta}"
        )));
    }
    let omega = if lambda == 0.0 {
        1.0
    } else {
        solve_trial_frequency(lambda, beta)?
    };
    Ok(BoundaryDistribution::JensenFeynmanGaussian {
        omega,
        variance: harmonic_diagonal_variance(omega, beta),
        dim: 1,
    })
}

fn solve_trial_frequency(lambda: f64, beta: f64) -> Result<f64> {
    let residual = |omega: f64| {
        omega * omega - 1.0 - 12.0 * lambda * harmonic_diagonal_variance(omega, beta)
    };
    // residual(1) = -12 lambda s^2 <= 0; expand the upper bracket until the
    // residual turns positive
    let mut lo = 1.0;
    let mut hi = 2.0;
    let mut expansions = 0;
    while residual(hi) < 0.0 {
        hi *= 2.0;
        expansions += 1;
        if expansions > 60 {
            return Err(Error::NonConvergence(
                "jensen-feynman bracket expansion failed".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let r = residual(mid);
        if r.abs() < 1e-10 {
            return Ok(mid);
        }
        if r < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    if residual(mid).abs() < 1e-10 {
        Ok(mid)
    } else {
        Err(Error::NonConvergence(format!(
            "jensen-feynman bisection stalled at residual {}",
            residual(mid)
        )))
    }
}

/// Log of the wrapped-normal density at angular displacement `d`:
/// sum over windings of N(d + 2 pi w; variance), truncated once terms fall
/// below 1e-16 so the accuracy is independent of the variance scale.
pub fn wrapped_normal_log_density(d: f64, variance: f64) -> f64 {
    if !variance.is_finite() {
        return -(TWO_PI.ln());
    }
    let norm = 1.0 / (TWO_PI * variance).sqrt();
    let gauss = |x: f64| norm * (-(x * x) / (2.0 * variance)).exp();
    let mut sum = gauss(d);
    let mut w = 1.0;
    loop {
        let plus = gauss(d + TWO_PI * w);
        let minus = gauss(d - TWO_PI * w);
        sum += plus + minus;
        if plus < 1e-16 && minus < 1e-16 {
            break;
        }
        w += 1.0;
    }
    sum.ln()
}

impl BoundaryDistribution {
    pub fn dim(&self) -> usize {
        match *self {
            BoundaryDistribution::JensenFeynmanGaussian { dim, .. } => dim,
            BoundaryDistribution::WrappedAutoregressive { sites, .. } => sites,
        }
    }

    /// Exact log P(z).
    pub fn log_density(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: z.len(),
            });
        }
        match *self {
            BoundaryDistribution::JensenFeynmanGaussian { variance, dim, .. } => {
                let quad: f64 = z.iter().map(|v| v * v).sum();
                Ok(-quad / (2.0 * variance) - 0.5 * dim as f64 * (TWO_PI * variance).ln())
            }
            BoundaryDistribution::WrappedAutoregressive { sites, variance } => {
                let mut logp = -(TWO_PI.ln());
                for i in 1..sites {
                    logp += wrapped_normal_log_density(z[i] - z[i - 1], variance);
                }
                Ok(logp)
            }
        }
    }

    /// Draw `count` boundary points with their log-densities. Point `i`
    /// uses stream `index_offset + i` in the boundary RNG domain, so chunked
    /// and whole-batch sampling agree.
    pub fn sample(
        &self,
        count: usize,
        seed: u64,
        index_offset: u64,
    ) -> Result<Vec<(Vec<f64>, f64)>> {
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let mut rng = stream_rng(seed, DOMAIN_BOUNDARY, index_offset + i as u64);
            let z = match *self {
                BoundaryDistribution::JensenFeynmanGaussian { variance, dim, .. } => {
                    let std = variance.sqrt();
                    (0..dim)
                        .map(|_| {
                            let g: f64 = StandardNormal.sample(&mut rng);
                            g * std
                        })
                        .collect::<Vec<f64>>()
                }
                BoundaryDistribution::WrappedAutoregressive { sites, variance } => {
                    let mut z = Vec::with_capacity(sites);
                    let first: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                    z.push(first);
                    for i in 1..sites {
                        let prev = z[i - 1];
                        let next = if variance.is_finite() {
                            let g: f64 = StandardNormal.sample(&mut rng);
                            wrap_angle(prev + g * variance.sqrt())
                        } else {
                            rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)
                        };
                        z.push(next);
                    }
                    z
                }
            };
            let logp = self.log_density(&z)?;
            out.push((z, logp));
        }
        Ok(out)
    }
}
