//! Log-domain accumulation and resampling helpers shared by the estimators.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// log(exp(a) + exp(b)) without overflow.
#[inline]
pub fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if a >= b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// log sum_i exp(x_i) by pairwise tree reduction. The reduction shape is a
/// function of the slice length only, so the result does not depend on how
/// the inputs were produced (thread count, chunking).
pub fn logsumexp(values: &[f64]) -> f64 {
    match values.len() {
        0 => f64::NEG_INFINITY,
        1 => values[0],
        2 => logaddexp(values[0], values[1]),
        n => {
            let mid = n / 2;
            logaddexp(logsumexp(&values[..mid]), logsumexp(&values[mid..]))
        }
    }
}

/// log of the arithmetic mean of exp(x_i).
pub fn logmeanexp(values: &[f64]) -> f64 {
    logsumexp(values) - (values.len() as f64).ln()
}

/// Mean and sample standard deviation (n-1 normalization).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Delta-method standard error of log mean exp(x_i): std(w)/(mean(w) sqrt(n))
/// with w_i = exp(x_i - max), which cancels the common scale.
pub fn log_mean_exp_std_error(log_values: &[f64]) -> f64 {
    let n = log_values.len();
    if n < 2 {
        return f64::INFINITY;
    }
    let m = log_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    let weights: Vec<f64> = log_values.iter().map(|v| (v - m).exp()).collect();
    let (mean, std) = mean_std(&weights);
    std / (mean * (n as f64).sqrt())
}

/// Bootstrap standard error of a statistic of per-block values, resampling
/// blocks with replacement. `statistic` maps the resampled index set to a
/// scalar. Deterministic given `rng`.
pub fn block_bootstrap_std<F>(n_blocks: usize, resamples: usize, rng: &mut ChaCha8Rng, statistic: F) -> f64
where
    F: Fn(&[usize]) -> f64,
{
    if n_blocks < 2 {
        return f64::INFINITY;
    }
    let mut indices = vec![0usize; n_blocks];
    let mut replicas = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        for slot in indices.iter_mut() {
            *slot = rng.random_range(0..n_blocks);
        }
        let value = statistic(&indices);
        if value.is_finite() {
            replicas.push(value);
        }
    }
    if replicas.len() < 2 {
        return f64::INFINITY;
    }
    mean_std(&replicas).1
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    #[test]
    fn logsumexp_matches_naive_small() {
        let xs = [0.3, -1.2, 2.4, 0.0, -0.7];
        let naive = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert_abs_diff_eq!(logsumexp(&xs), naive, epsilon = 1e-13);
    }

    #[test]
    fn logsumexp_survives_extreme_magnitudes() {
        // exp(+-700) would overflow/underflow a naive sum
        let xs = [700.0, 699.0, -700.0];
        let expected = 700.0 + (1.0 + (-1.0f64).exp()).ln();
        assert_abs_diff_eq!(logsumexp(&xs), expected, epsilon = 1e-12);
        assert!(logsumexp(&[-700.0, -700.0]).is_finite());
    }

    #[test]
    fn logsumexp_tree_is_order_of_length_only() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin()).collect();
        let a = logsumexp(&xs);
        let b = logsumexp(&xs);
        assert_eq!(a, b);
    }

    #[test]
    fn delta_method_error_on_known_sample() {
        // weights 1 and 3: mean 2, std sqrt(2); se(log) = sqrt(2)/(2*sqrt(2)) = 0.5
        let logs = [0.0f64, 3.0f64.ln()];
        assert_abs_diff_eq!(log_mean_exp_std_error(&logs), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn bootstrap_scale_matches_theory() {
        // std error of the mean of n iid values ~ std/sqrt(n)
        let values: Vec<f64> = (0..400).map(|i| ((i * 2654435761u64 as usize) % 997) as f64 / 997.0).collect();
        let (_, std) = mean_std(&values);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let se = block_bootstrap_std(values.len(), 200, &mut rng, |idx| {
            idx.iter().map(|&i| values[i]).sum::<f64>() / idx.len() as f64
        });
        let theory = std / (values.len() as f64).sqrt();
        assert!((se - theory).abs() < 0.3 * theory, "se={se} theory={theory}");
    }
}
