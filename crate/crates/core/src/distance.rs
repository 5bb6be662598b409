//! Distances between slices and between samples.

use crate::density::Slice;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Mass tolerance accepted by [`wasserstein1`].
pub const W1_MASS_TOL: f64 = 1e-6;

/// `sum_i |u_i - v_i| dx`.
pub fn l1_distance<T: Real>(u: &Slice<T>, v: &Slice<T>) -> Result<T> {
    u.check_same_grid(v)?;
    Ok(u.values()
        .iter()
        .zip(v.values())
        .map(|(&a, &b)| (a - b).abs())
        .sum::<T>()
        * u.grid().dx())
}

/// Wasserstein-1 distance on the window, `integral |F_u - F_v| dx`.
pub fn wasserstein1<T: Real>(u: &Slice<T>, v: &Slice<T>) -> Result<T> {
    u.check_same_grid(v)?;
    for s in [u, v] {
        let m = s.mass();
        if (m - T::one()).abs().as_f64() > W1_MASS_TOL {
            return Err(Error::NotNormalized { mass: m.as_f64() });
        }
    }
    let dx = u.grid().dx();
    let (mut fu, mut fv, mut acc) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in u.values().iter().zip(v.values()) {
        fu = fu + a * dx;
        fv = fv + b * dx;
        acc = acc + (fu - fv).abs();
    }
    Ok(acc * dx)
}

/// Two-sample Kolmogorov-Smirnov statistic. Inputs need not be sorted.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of the Kolmogorov distribution, `P(K > sqrt(n) d)`,
/// with the Stephens small-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powi(k as i32 - 1) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}
