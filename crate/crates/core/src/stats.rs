//! Small statistics helpers for Monte Carlo estimators.
//!
//! Reductions walk their inputs in index order so the result does not depend
//! on how the values were produced.

/// Sample mean and standard error `s / sqrt(n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Estimate {
                mean: f64::NAN,
                stderr: f64::NAN,
                n,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Estimate { mean, stderr, n }
    }

    /// Exact value with zero error.
    pub fn exact(mean: f64) -> Self {
        Estimate {
            mean,
            stderr: 0.0,
            n: 0,
        }
    }
}

/// `sqrt(a^2 + b^2)` for independent estimates.
pub fn combined_stderr(a: f64, b: f64) -> f64 {
    a.hypot(b)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Linear-interpolated quantile of an unsorted sample.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Standard normal quantile for the one-sided 99% level.
pub const Z_99: f64 = 2.326_347_874_040_841;

/// Upper end of the Wilson score interval for a binomial proportion.
pub fn wilson_upper(successes: usize, n: usize, z: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = p + z2 / (2.0 * n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre + half) / (1.0 + z2 / n)).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_of_constant() {
        let e = Estimate::from_samples(&[2.0; 10]);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn estimate_stderr() {
        let e = Estimate::from_samples(&[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(e.mean, 0.5);
        // s^2 = 1/3, stderr = sqrt(1/12)
        assert!((e.stderr - (1.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn wilson_bounds() {
        // Reference value for 0 of 100 at z = 2.3263: z^2/(n + z^2).
        let z2 = Z_99 * Z_99;
        assert!((wilson_upper(0, 100, Z_99) - z2 / (100.0 + z2)).abs() < 1e-12);
        assert_eq!(wilson_upper(100, 100, Z_99), 1.0);
        assert!(wilson_upper(30, 100, Z_99) > 0.3);
    }

    #[test]
    fn quantiles() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(quantile(&[0.0, 10.0], 0.25), 2.5);
    }
}
