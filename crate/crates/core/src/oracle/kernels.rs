//! Closed-form imaginary-time kernels used as test targets.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    FreeParticle,
    /// V(x) = x^2 / 2.
    Harmonic,
}

/// K(x_T, T | x_0, 0) for the named system; `x0` and `xt` must share length.
pub fn analytic_kernel(kind: KernelKind, x0: &[f64], xt: &[f64], total_time: f64) -> Result<f64> {
    if x0.len() != xt.len() {
        return Err(Error::DimensionMismatch {
            expected: x0.len(),
            got: xt.len(),
        });
    }
    if !(total_time > 0.0) {
        return Err(Error::Config(format!("kernel needs T > 0, got {total_time}")));
    }
    let n = x0.len() as f64;
    let two_pi = 2.0 * std::f64::consts::PI;
    match kind {
        KernelKind::FreeParticle => {
            let sq: f64 = x0.iter().zip(xt).map(|(a, b)| (a - b) * (a - b)).sum();
            Ok((two_pi * total_time).powf(-n / 2.0) * (-sq / (2.0 * total_time)).exp())
        }
        KernelKind::Harmonic => {
            let sh = total_time.sinh();
            let ch = total_time.cosh();
            let mut log_k = -0.5 * n * (two_pi * sh).ln();
            for (a, b) in x0.iter().zip(xt) {
                log_k += -((a * a + b * b) * ch - 2.0 * a * b) / (2.0 * sh);
            }
            Ok(log_k.exp())
        }
    }
}
