//! First-order optimizer with per-parameter adaptive scaling.

use super::tape::Mat;

/// Adam-style moment-tracking update. Steps with any non-finite gradient
/// entry are skipped and counted instead of poisoning the parameters.
#[derive(Debug, Clone)]
pub struct Adam {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Mat>,
    v: Vec<Mat>,
    /// Number of updates skipped because a gradient was non-finite.
    pub skipped: u64,
}

impl Adam {
    pub fn new(step_size: f64, shapes: &[(usize, usize)]) -> Self {
        Adam {
            step_size,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: shapes.iter().map(|&s| Mat::zeros(s)).collect(),
            v: shapes.iter().map(|&s| Mat::zeros(s)).collect(),
            skipped: 0,
        }
    }

    pub fn for_params(step_size: f64, params: &[&Mat]) -> Self {
        let shapes: Vec<(usize, usize)> = params.iter().map(|p| p.dim()).collect();
        Self::new(step_size, &shapes)
    }

    /// Apply one update in place. Returns false if the step was skipped.
    pub fn step(&mut self, params: &mut [&mut Mat], grads: &[Mat]) -> bool {
        assert_eq!(params.len(), grads.len());
        if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            self.skipped += 1;
            return false;
        }
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            ndarray::Zip::from(&mut **p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                    *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                    let m_hat = *m / b1t;
                    let v_hat = *v / b2t;
                    *p -= self.step_size * m_hat / (v_hat.sqrt() + self.eps);
                });
        }
        true
    }
}
