//! The handful of summary statistics the experiments report.

/// Kolmogorov-Smirnov distance between the empirical law of `xs` and the
/// uniform law on `[lo, hi]`. Returns `NaN` for an empty sample.
pub fn ks_uniform(xs: &[f64], lo: f64, hi: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut s: Vec<f64> = xs.iter().map(|&x| ((x - lo) / (hi - lo)).clamp(0.0, 1.0)).collect();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &u)| ((i + 1) as f64 / n - u).max(u - i as f64 / n))
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value `sqrt(-ln(alpha/2) / 2) / sqrt(n)` for i.i.d. samples.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-(0.5 * alpha).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Sample mean and its standard error. The error is `NaN` below two samples.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Half-width `z sqrt(p (1 - p) / n)` of the normal-approximation binomial
/// interval around a hypothesised success probability `p`.
pub fn binomial_interval(p: f64, n: usize, z: f64) -> f64 {
    z * (p * (1.0 - p) / n as f64).sqrt()
}

/// Linear-interpolation quantile of an unsorted sample.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let h = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let (i, frac) = (h.floor() as usize, h.fract());
    if i + 1 < s.len() {
        s[i] + frac * (s[i + 1] - s[i])
    } else {
        s[i]
    }
}

/// Step points `(x, F(x))` of the empirical distribution function.
pub fn ecdf(xs: &[f64]) -> Vec<(f64, f64)> {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter().enumerate().map(|(i, &x)| (x, (i + 1) as f64 / n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn ks_of_known_samples() {
        assert_eq!(ks_uniform(&[1.0], 0.0, 2.0), 0.5);
        // Midpoints of n equal cells are at distance 1/(2n).
        let xs: Vec<f64> = (0..10).map(|i| 0.2 * i as f64 + 0.1).collect();
        assert!((ks_uniform(&xs, 0.0, 2.0) - 0.05).abs() < 1e-15);
        assert_eq!(ks_uniform(&[0.0; 5], 0.0, 2.0), 1.0);
        assert!(ks_uniform(&[], 0.0, 1.0).is_nan());
    }

    #[test]
    fn ks_of_uniform_draws_is_within_critical_value() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..5000).map(|_| 2.0 * rng.random::<f64>()).collect();
        assert!(ks_uniform(&xs, 0.0, 2.0) < ks_critical(xs.len(), 0.001));
        assert!((ks_critical(100, 0.05) - 0.1358).abs() < 1e-4);
    }

    #[test]
    fn moments_and_quantiles() {
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0_f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert!(mean_stderr(&[1.0]).1.is_nan());
        assert_eq!(quantile(&[3.0, 1.0, 2.0], 0.5), 2.0);
        assert_eq!(quantile(&[1.0, 2.0], 0.25), 1.25);
        assert!((binomial_interval(0.5, 400, 3.0) - 0.075).abs() < 1e-15);
        assert_eq!(ecdf(&[2.0, 1.0]), vec![(1.0, 0.5), (2.0, 1.0)]);
    }

    proptest! {
        #[test]
        fn ks_is_a_distance(xs in prop::collection::vec(0.0..2.0f64, 1..200)) {
            let d = ks_uniform(&xs, 0.0, 2.0);
            prop_assert!(d >= 0.5 / xs.len() as f64 - 1e-12 && d <= 1.0);
        }
    }
}
