//! Gaussian kernel density estimates of particle ensembles on a grid.

use crate::density::Slice;
use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::scalar::Real;

/// Kernel support in bandwidths; the dropped tail is below `exp(-32)`.
const CUTOFF: f64 = 8.0;

/// Silverman's rule `1.06 sigma N^(-1/5)` on the first coordinate.
///
/// A degenerate ensemble (zero spread) has no usable scale and returns 0.
pub fn silverman_bandwidth<T: Real>(ens: &ParticleEnsemble<T>) -> T {
    let sd = ens.variance().max(T::zero()).sqrt();
    T::of(1.06) * sd * T::of_usize(ens.len()).powf(T::of(-0.2))
}

fn resolve_bandwidth<T: Real>(ens: &ParticleEnsemble<T>, bandwidth: T, grid: &SpatialGrid<T>) -> T {
    if bandwidth > T::zero() {
        return bandwidth;
    }
    let h = silverman_bandwidth(ens);
    // A single particle or a collapsed ensemble falls back to one cell width.
    if h > T::zero() {
        h
    } else {
        grid.dx()
    }
}

/// Gaussian-kernel estimate of the first-coordinate marginal, renormalized to
/// unit mass on the grid. `bandwidth = 0` selects Silverman's rule.
///
/// Particles are summed in sorted order, so the result is bit-identical under
/// any permutation of the ensemble.
pub fn kde<T: Real>(ens: &ParticleEnsemble<T>, bandwidth: T, grid: &SpatialGrid<T>) -> Result<Slice<T>> {
    if ens.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let h = resolve_bandwidth(ens, bandwidth, grid);
    let mut pts: Vec<(T, T)> = ens
        .first_coordinates()
        .into_iter()
        .zip(ens.weights().iter().copied())
        .collect();
    pts.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
    });

    let n = grid.n_cells();
    let dx = grid.dx();
    let mut out = vec![T::zero(); n];
    let inv_2h2 = T::one() / (T::of(2.0) * h * h);
    let reach = T::of(CUTOFF) * h;
    // Ratio of successive kernel ratios on a uniform grid.
    let q = (-(dx * dx) / (h * h)).exp();
    for &(p, w) in &pts {
        let lo_x = p - reach;
        let hi_x = p + reach;
        if hi_x < grid.x_min() || lo_x > grid.x_max() {
            continue;
        }
        let lo = grid.cell_of(lo_x);
        let hi = grid.cell_of(hi_x);
        if hi - lo < 32 {
            for (i, o) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
                let d = grid.center(i) - p;
                *o = *o + w * (-(d * d) * inv_2h2).exp();
            }
        } else {
            // g_{i+1} = g_i r_i and r_{i+1} = r_i q, from expanding the square.
            let d0 = grid.center(lo) - p;
            let mut g = (-(d0 * d0) * inv_2h2).exp();
            let mut r = (-(T::of(2.0) * d0 * dx + dx * dx) * inv_2h2).exp();
            for o in &mut out[lo..=hi] {
                *o = *o + w * g;
                g = g * r;
                r = r * q;
            }
        }
    }
    Slice::new(*grid, out).map(Slice::normalized)
}

/// Binned approximation of [`kde`]: linear binning onto the cell centers
/// followed by a discrete Gaussian convolution. Cost is independent of `N`
/// after binning; used inside simulation loops and for bootstrap resamples.
pub fn kde_binned<T: Real>(
    positions: &[T],
    weights: Option<&[T]>,
    bandwidth: T,
    grid: &SpatialGrid<T>,
) -> Result<Slice<T>> {
    if positions.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let n = grid.n_cells();
    let mut bins = vec![T::zero(); n];
    let uniform = T::one() / T::of_usize(positions.len());
    for (j, &x) in positions.iter().enumerate() {
        let w = weights.map_or(uniform, |ws| ws[j]);
        deposit(&mut bins, grid, x, w);
    }
    convolve_bins(&bins, bandwidth, grid)
}

/// Adds weight `w` at `x` by linear interpolation onto the two nearest centers.
#[inline]
pub(crate) fn deposit<T: Real>(bins: &mut [T], grid: &SpatialGrid<T>, x: T, w: T) {
    let n = bins.len();
    let pos = (x - grid.x_min()) / grid.dx() - T::of(0.5);
    if !(pos > T::zero()) {
        bins[0] = bins[0] + w;
        return;
    }
    let i = pos.floor().to_usize().unwrap_or(n);
    if i + 1 >= n {
        bins[n - 1] = bins[n - 1] + w;
        return;
    }
    let f = pos - T::of_usize(i);
    bins[i] = bins[i] + w * (T::one() - f);
    bins[i + 1] = bins[i + 1] + w * f;
}

/// Convolves binned weights with a sampled Gaussian kernel and normalizes.
pub(crate) fn convolve_bins<T: Real>(bins: &[T], bandwidth: T, grid: &SpatialGrid<T>) -> Result<Slice<T>> {
    if !(bandwidth > T::zero()) {
        return Err(Error::InvalidParameter("binned KDE needs a positive bandwidth".into()));
    }
    let n = bins.len();
    let dx = grid.dx();
    let half = (T::of(CUTOFF) * bandwidth / dx)
        .ceil()
        .to_usize()
        .unwrap_or(n)
        .min(n);
    let kernel: Vec<T> = (0..=half)
        .map(|j| {
            let d = T::of_usize(j) * dx / bandwidth;
            (-(d * d) / T::of(2.0)).exp()
        })
        .collect();
    let mut out = vec![T::zero(); n];
    for (i, &b) in bins.iter().enumerate() {
        if b == T::zero() {
            continue;
        }
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        for (k, o) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
            *o = *o + b * kernel[k.abs_diff(i)];
        }
    }
    Slice::new(*grid, out).map(Slice::normalized)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::gaussian_density;
    use crate::distance::l1_distance;
    use crate::grid::make_grid;
    use crate::rng::{normal, Purpose, RngStream};

    #[test]
    fn single_particle_is_the_kernel() {
        let g = make_grid(-5.0f64, 5.0, 1000).unwrap();
        for h in [0.05, 0.3, 0.7] {
            let ens = ParticleEnsemble::new(0.0, vec![0.0]).unwrap();
            let est = kde(&ens, h, &g).unwrap();
            let exact = gaussian_density(&g, 0.0, h * h).unwrap();
            let worst = est
                .values()
                .iter()
                .zip(exact.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(worst < 1e-6, "h = {h}: {worst}");
        }
    }

    #[test]
    fn empty_ensemble_rejected() {
        let g = make_grid(-1.0f64, 1.0, 16).unwrap();
        assert_eq!(kde_binned::<f64>(&[], None, 0.1, &g), Err(Error::EmptyEnsemble));
    }

    #[test]
    fn silverman_recovers_standard_normal() {
        let g = make_grid(-6.0f64, 6.0, 1200).unwrap();
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|i| normal(&mut RngStream::particle(2024, i, 0, Purpose::Initial).rng()))
            .collect();
        let ens = ParticleEnsemble::new(0.0, xs).unwrap();
        let est = kde(&ens, 0.0, &g).unwrap();
        let truth = gaussian_density(&g, 0.0, 1.0).unwrap();
        let d = l1_distance(&est, &truth).unwrap();
        assert!(d <= 0.02, "l1 = {d}");
        assert!((est.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn binned_matches_exact() {
        let g = make_grid(-6.0f64, 6.0, 1200).unwrap();
        let xs: Vec<f64> = (0..5000)
            .map(|i| normal(&mut RngStream::particle(5, i, 0, Purpose::Initial).rng()))
            .collect();
        let ens = ParticleEnsemble::new(0.0, xs.clone()).unwrap();
        let exact = kde(&ens, 0.2, &g).unwrap();
        let binned = kde_binned(&xs, None, 0.2, &g).unwrap();
        assert!(l1_distance(&exact, &binned).unwrap() < 1e-3);
    }

    #[test]
    fn permutation_invariant() {
        let g = make_grid(-4.0f64, 4.0, 400).unwrap();
        let xs = vec![0.3, -1.2, 2.2, 0.1, 0.1, -0.4];
        let mut ys = xs.clone();
        ys.reverse();
        ys.swap(0, 3);
        let a = kde(&ParticleEnsemble::new(0.0, xs).unwrap(), 0.0, &g).unwrap();
        let b = kde(&ParticleEnsemble::new(0.0, ys).unwrap(), 0.0, &g).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn recurrence_matches_direct_evaluation() {
        let g = make_grid(-3.0f64, 3.0, 3000).unwrap();
        let ens = ParticleEnsemble::new(0.0, vec![0.123]).unwrap();
        let est = kde(&ens, 0.25, &g).unwrap();
        let direct = Slice::from_fn(g, |x| (-(x - 0.123) * (x - 0.123) / (2.0 * 0.0625)).exp()).normalized();
        for (a, b) in est.values().iter().zip(direct.values()) {
            assert!((a - b).abs() < 1e-11);
        }
    }
}
