//! Statistical checks of structural properties: superposition of marginals,
//! the flow (Chapman-Kolmogorov) property, domination of solutions, and the
//! square-root energy.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::catalog::Bump;
use crate::coeffs::Coefficients;
use crate::density::{DensityTrajectory, Slice};
use crate::distance::wasserstein1;
use crate::ensemble::PathBundle;
use crate::error::{Error, Result};
use crate::fpe::{solve_linear_fpe, SchemeConfig};
use crate::grid::SpatialGrid;
use crate::kde::{deposit, kde_binned, convolve_bins};
use crate::rng::{normal, uniform, Purpose, RngStream};
use crate::sde::{sample_initial_dim, simulate_paths, InitialLaw, SimConfig};
use crate::stats::{quantile, variance};

/// Bootstrap resamples behind every W1 standard error.
pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// One line of the verdict CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct VerdictRow {
    pub check: String,
    pub checkpoint: f64,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// CSV `check,checkpoint,statistic,threshold,verdict`.
pub fn write_verdicts<W: Write>(rows: &[VerdictRow], mut w: W) -> io::Result<()> {
    writeln!(w, "check,checkpoint,statistic,threshold,verdict")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:.16e},{:.16e},{}",
            r.check,
            r.checkpoint,
            r.statistic,
            r.threshold,
            if r.pass { "PASS" } else { "FAIL" }
        )?;
    }
    Ok(())
}

/// W1 between a particle KDE and a target slice, with its bootstrap spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalDistance {
    pub w1: f64,
    /// Standard deviation of W1 over the bootstrap resamples.
    pub stderr: f64,
    /// 2.5% and 97.5% bootstrap percentiles.
    pub band: (f64, f64),
    pub bandwidth: f64,
}

fn silverman(xs: &[f64], grid: &SpatialGrid<f64>) -> f64 {
    let h = if xs.len() > 1 {
        1.06 * variance(xs).sqrt() * (xs.len() as f64).powf(-0.2)
    } else {
        0.0
    };
    if h > 0.0 {
        h
    } else {
        grid.dx()
    }
}

/// Resampled binned KDE of `xs` for bootstrap replicate `b`.
fn resampled_kde(xs: &[f64], h: f64, grid: &SpatialGrid<f64>, seed: u64, key: u64, b: usize) -> Result<Slice<f64>> {
    let mut rng = RngStream::particle(seed, b, key, Purpose::Bootstrap).rng();
    let n = xs.len();
    let w = 1.0 / n as f64;
    let mut bins = vec![0.0; grid.n_cells()];
    for _ in 0..n {
        let j = ((uniform(&mut rng) * n as f64) as usize).min(n - 1);
        deposit(&mut bins, grid, xs[j], w);
    }
    convolve_bins(&bins, h, grid)
}

fn spread(ws: &[f64]) -> (f64, (f64, f64)) {
    (variance(ws).sqrt(), (quantile(ws, 0.025), quantile(ws, 0.975)))
}

/// W1 between the binned KDE of `xs` and `target`, with bootstrap standard
/// error. `bandwidth = 0` selects Silverman's rule.
pub fn marginal_distance(
    xs: &[f64],
    target: &Slice<f64>,
    bandwidth: f64,
    seed: u64,
    key: u64,
) -> Result<MarginalDistance> {
    let grid = *target.grid();
    let h = if bandwidth > 0.0 { bandwidth } else { silverman(xs, &grid) };
    let w1 = wasserstein1(&kde_binned(xs, None, h, &grid)?, target)?;
    let ws: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .into_par_iter()
        .map(|b| wasserstein1(&resampled_kde(xs, h, &grid, seed, key, b)?, target))
        .collect::<Result<_>>()?;
    let (stderr, band) = spread(&ws);
    Ok(MarginalDistance {
        w1,
        stderr,
        band,
        bandwidth: h,
    })
}

/// Compares the path marginals at each elapsed checkpoint with the density
/// trajectory at the same clock; pass iff `W1 <= 3 stderr + 2 dx`.
pub fn check_superposition(
    u_traj: &DensityTrajectory<f64>,
    paths: &PathBundle<f64>,
    checkpoints: &[f64],
    bandwidth: f64,
    seed: u64,
) -> Result<Vec<VerdictRow>> {
    let dx = u_traj.grid().dx();
    checkpoints
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let k = paths.step_of(t).ok_or(Error::CheckpointOutsideTrajectory(t))?;
            let target = u_traj.slice_at(paths.clock_at(k))?;
            let xs = paths.marginal(k).first_coordinates();
            let d = marginal_distance(&xs, &target, bandwidth, seed, j as u64)?;
            let threshold = 3.0 * d.stderr + 2.0 * dx;
            Ok(VerdictRow {
                check: "superposition".into(),
                checkpoint: t,
                statistic: d.w1,
                threshold,
                pass: d.w1 <= threshold,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowReport {
    /// W1 between the final KDEs of the one-leg and two-leg runs.
    pub w1: f64,
    pub stderr: f64,
    pub bandwidth: f64,
    /// `3 stderr + 2 bandwidth`.
    pub threshold: f64,
    /// W1 between the one-leg run and an independent duplicate, plus
    /// `2 bandwidth`; the reference level for the `r = 0` control.
    pub noise_floor: f64,
    pub pass: bool,
}

/// Settings of the flow check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSetup {
    pub s: f64,
    pub r: f64,
    pub t: f64,
    pub n: usize,
    pub dt: f64,
    pub bandwidth: f64,
    pub seed: u64,
}

/// Chapman-Kolmogorov check: particles from `nu_s` at clock `s` evolved for
/// `r + t`, against particles evolved for `r`, replaced by i.i.d. draws from
/// the KDE of that marginal at clock `s + r`, and evolved for `t`.
pub fn check_flow_property<C: Coefficients<f64> + ?Sized>(
    coeffs: &C,
    nu_s: &InitialLaw,
    grid: &SpatialGrid<f64>,
    setup: &FlowSetup,
) -> Result<FlowReport> {
    let FlowSetup { s, r, t, n, dt, bandwidth, seed } = *setup;
    let init = sample_initial_dim(nu_s, n, 1, s, seed, 0)?;
    let final_of = |paths: PathBundle<f64>| paths.marginal(paths.steps()).first_coordinates();
    let cfg = SimConfig::new(n, dt, r + t, seed).recording_at(&[]);
    let one_leg = final_of(simulate_paths(coeffs, &init, &cfg)?);

    let mid = if r > 0.0 {
        final_of(simulate_paths(coeffs, &init, &cfg.clone().with_horizon(r).recording_at(&[]))?)
    } else {
        init.first_coordinates()
    };
    let h_mid = if bandwidth > 0.0 { bandwidth } else { silverman(&mid, grid) };
    let restart: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::particle(seed, i, 0, Purpose::Resample).rng();
            let j = ((uniform(&mut rng) * n as f64) as usize).min(n - 1);
            mid[j] + h_mid * normal(&mut rng)
        })
        .collect();
    let restart = crate::ensemble::ParticleEnsemble::new(s + r, restart)?;
    let cfg2 = SimConfig::new(n, dt, t, seed).replicate(2).recording_at(&[]);
    let two_leg = final_of(simulate_paths(coeffs, &restart, &cfg2)?);

    let dup_init = sample_initial_dim(nu_s, n, 1, s, seed, 3)?;
    let duplicate = final_of(simulate_paths(coeffs, &dup_init, &cfg.clone().replicate(3))?);

    let h = if bandwidth > 0.0 { bandwidth } else { silverman(&one_leg, grid) };
    let w1_between = |a: &[f64], b: &[f64]| -> Result<f64> {
        wasserstein1(&kde_binned(a, None, h, grid)?, &kde_binned(b, None, h, grid)?)
    };
    let w1 = w1_between(&one_leg, &two_leg)?;
    let ws: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .into_par_iter()
        .map(|b| {
            let ka = resampled_kde(&one_leg, h, grid, seed, 10, b)?;
            let kb = resampled_kde(&two_leg, h, grid, seed, 11, b)?;
            wasserstein1(&ka, &kb)
        })
        .collect::<Result<_>>()?;
    let (stderr, _) = spread(&ws);
    let threshold = 3.0 * stderr + 2.0 * h;
    let noise_floor = w1_between(&one_leg, &duplicate)? + 2.0 * h;
    Ok(FlowReport {
        w1,
        stderr,
        bandwidth: h,
        threshold,
        noise_floor,
        pass: w1 <= threshold,
    })
}

/// Allowed excess of `nu_t` over `c mu_t` in a cell.
#[inline]
fn domination_tolerance(mu: f64) -> f64 {
    1e-8 + 1e-6 * mu
}

/// Evolves `nu_0` and `mu_0` with the same linear coefficients and checks
/// `nu_t <= c mu_t` cellwise at each checkpoint (statistic: largest excess
/// of `nu - c mu` over the tolerance `1e-8 + 1e-6 mu`).
pub fn check_domination<C: Coefficients<f64> + ?Sized>(
    nu0: &Slice<f64>,
    c: f64,
    mu0: &Slice<f64>,
    coeffs: &C,
    checkpoints: &[f64],
    scheme: &SchemeConfig<f64>,
) -> Result<Vec<VerdictRow>> {
    nu0.check_same_grid(mu0)?;
    let grid = *mu0.grid();
    for (i, (&n, &m)) in nu0.values().iter().zip(mu0.values()).enumerate() {
        let excess = n - c * m;
        if excess > domination_tolerance(m) {
            return Err(Error::InitialDominationFails {
                x: grid.center(i),
                excess,
            });
        }
    }
    let horizon = checkpoints.iter().copied().fold(0.0, f64::max);
    let nu = solve_linear_fpe(nu0, coeffs, horizon, scheme)?;
    let mu = solve_linear_fpe(mu0, coeffs, horizon, scheme)?;
    checkpoints
        .iter()
        .map(|&t| {
            let (a, b) = (nu.slice_at(t)?, mu.slice_at(t)?);
            let worst = a
                .values()
                .iter()
                .zip(b.values())
                .map(|(&n, &m)| n - c * m - domination_tolerance(m))
                .fold(f64::NEG_INFINITY, f64::max);
            Ok(VerdictRow {
                check: format!("domination c={c}"),
                checkpoint: t,
                statistic: worst,
                threshold: 0.0,
                pass: worst <= 0.0,
            })
        })
        .collect()
}

/// Floor applied to densities before taking square roots.
pub const SQRT_FLOOR: f64 = 1e-12;

/// Time-integrated `sum_i |D_x(sqrt(u) h)|^2 / dx`, trapezoidal in time over
/// the stored slices.
pub fn sqrt_energy(u_traj: &DensityTrajectory<f64>, h: &Bump) -> f64 {
    let grid = u_traj.grid();
    let hv: Vec<f64> = grid.centers().into_iter().map(|x| h.eval(x)).collect();
    let slice_energy = |k: usize| -> f64 {
        let w: Vec<f64> = u_traj
            .values(k)
            .iter()
            .zip(&hv)
            .map(|(&u, &hx)| u.max(SQRT_FLOOR).sqrt() * hx)
            .collect();
        w.windows(2).map(|p| (p[1] - p[0]) * (p[1] - p[0])).sum::<f64>() / grid.dx()
    };
    let times = u_traj.times();
    let e: Vec<f64> = (0..times.len()).map(slice_energy).collect();
    times
        .windows(2)
        .zip(e.windows(2))
        .map(|(t, e)| 0.5 * (t[1] - t[0]) * (e[0] + e[1]))
        .sum()
}

/// Energies over successive refinements.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergySeries {
    pub values: Vec<f64>,
}

impl EnergySeries {
    /// Ratios of successive values.
    pub fn ratios(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] / w[0]).collect()
    }

    /// Bounded iff every successive ratio is at most 1.25.
    pub fn bounded(&self) -> bool {
        self.ratios().iter().all(|&r| r <= 1.25)
    }
}

/// Energies of trajectories produced by `solve` on `levels` grids, each
/// level halving `dx` and `dt`.
pub fn energy_series(
    grid: &SpatialGrid<f64>,
    scheme: &SchemeConfig<f64>,
    levels: usize,
    h: &Bump,
    solve: impl Fn(&SpatialGrid<f64>, &SchemeConfig<f64>) -> Result<DensityTrajectory<f64>>,
) -> Result<EnergySeries> {
    let values = (0..levels)
        .map(|l| {
            let g = grid.refine(1 << l)?;
            let cfg = SchemeConfig {
                dt: scheme.dt / (1 << l) as f64,
                record_every: scheme.record_every << l,
                ..*scheme
            };
            Ok(sqrt_energy(&solve(&g, &cfg)?, h))
        })
        .collect::<Result<_>>()?;
    Ok(EnergySeries { values })
}

#[cfg(test)]
mod tests;
