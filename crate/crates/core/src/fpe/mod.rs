//! Conservative finite-volume solvers for forward and backward Kolmogorov
//! equations on a truncated window with zero-flux edges.
//!
//! The forward operator `1/2 (a u)'' - (b u)'` is written in flux form: drift
//! fluxes are upwinded at cell faces and advanced explicitly, diffusion uses a
//! theta scheme (`theta = 0` explicit, `theta = 1` implicit).

mod backward;
mod perturbed;
mod porous;
mod stencil;

pub use backward::{solve_backward_kolmogorov, Domain, SpaceTimeField};
pub use perturbed::solve_perturbed_fpe;
pub use porous::{linearize, solve_porous_media, solve_porous_media_with_stats};

use crate::coeffs::Coefficients;
use crate::density::{DensityTrajectory, Slice};
use crate::error::{Error, Result};
use crate::scalar::Real;

use stencil::{ForwardStep, StepCoefficients};

/// Values in `[-CLAMP_FLOOR, 0)` are clamped to zero; anything lower is a bug.
pub const CLAMP_FLOOR: f64 = 1e-12;

/// Time discretization of the diffusion part.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Theta {
    Explicit,
    Implicit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig<T> {
    pub dt: T,
    pub theta: Theta,
    /// Allowed `|mass - 1|` after every step.
    pub mass_tol: T,
    /// Store every `record_every`-th step (the final step is always stored).
    pub record_every: usize,
}

impl<T: Real> SchemeConfig<T> {
    pub fn explicit(dt: T) -> Self {
        SchemeConfig {
            dt,
            theta: Theta::Explicit,
            mass_tol: T::of(1e-8),
            record_every: 1,
        }
    }

    pub fn implicit(dt: T) -> Self {
        SchemeConfig {
            theta: Theta::Implicit,
            ..Self::explicit(dt)
        }
    }

    pub fn recording_every(mut self, k: usize) -> Self {
        self.record_every = k.max(1);
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }

    /// Largest stable `dt` for the given coefficient bounds.
    ///
    /// Explicit: `dt (max a / dx^2 + max |b| / dx) <= 1`, which keeps every
    /// update a convex combination. Implicit: only the drift part is explicit.
    pub fn stability_bound(&self, max_a: T, max_b: T, dx: T) -> T {
        let rate = match self.theta {
            Theta::Explicit => max_a / (dx * dx) + max_b / dx,
            Theta::Implicit => max_b / dx,
        };
        if rate > T::zero() {
            T::one() / rate
        } else {
            T::infinity()
        }
    }

    /// Step count and final step length covering `[0, horizon]`.
    pub(crate) fn time_steps(&self, horizon: T) -> (usize, T) {
        let ratio = (horizon / self.dt).as_f64();
        let n = (ratio - 1e-9).ceil().max(1.0) as usize;
        let last = horizon - T::of_usize(n - 1) * self.dt;
        (n, last)
    }
}

/// Clamp and conservation bookkeeping from one solve.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveStats {
    pub steps: usize,
    /// Largest magnitude clamped to zero in any cell.
    pub max_clamp: f64,
    pub max_mass_error: f64,
}

/// Clamps round-off negatives, checks mass, renormalizes if anything moved.
pub(crate) fn settle<T: Real>(
    u: &mut [T],
    dx: T,
    t: T,
    x_of: impl Fn(usize) -> T,
    cfg: &SchemeConfig<T>,
    stats: &mut SolveStats,
) -> Result<()> {
    let floor = T::of(-CLAMP_FLOOR);
    let mut clamped = false;
    for (i, v) in u.iter_mut().enumerate() {
        if *v < T::zero() {
            if *v < floor || !v.is_finite() {
                return Err(Error::NegativeDensity {
                    t: t.as_f64(),
                    x: x_of(i).as_f64(),
                    value: v.as_f64(),
                });
            }
            stats.max_clamp = stats.max_clamp.max(-v.as_f64());
            *v = T::zero();
            clamped = true;
        } else if !v.is_finite() {
            return Err(Error::NegativeDensity {
                t: t.as_f64(),
                x: x_of(i).as_f64(),
                value: v.as_f64(),
            });
        }
    }
    let mass = u.iter().copied().sum::<T>() * dx;
    let drift = (mass - T::one()).abs();
    stats.max_mass_error = stats.max_mass_error.max(drift.as_f64());
    if drift > cfg.mass_tol {
        return Err(Error::MassDrift {
            t: t.as_f64(),
            drift: drift.as_f64(),
        });
    }
    if clamped {
        let inv = T::one() / mass;
        u.iter_mut().for_each(|v| *v = *v * inv);
    }
    Ok(())
}

pub(crate) fn check_unit_mass<T: Real>(u0: &Slice<T>, cfg: &SchemeConfig<T>) -> Result<()> {
    let m = u0.mass();
    if (m - T::one()).abs() > cfg.mass_tol.max(T::of(1e-6)) {
        return Err(Error::NotNormalized { mass: m.as_f64() });
    }
    if u0.min_value() < T::zero() {
        return Err(Error::NegativeDensity {
            t: 0.0,
            x: f64::NAN,
            value: u0.min_value().as_f64(),
        });
    }
    Ok(())
}

/// Forward Fokker-Planck solve `du/dt = 1/2 (a u)'' - (b u)'` from `u0` at
/// clock 0 up to `horizon`.
pub fn solve_linear_fpe<T: Real, C: Coefficients<T> + ?Sized>(
    u0: &Slice<T>,
    coeffs: &C,
    horizon: T,
    cfg: &SchemeConfig<T>,
) -> Result<DensityTrajectory<T>> {
    solve_linear_fpe_from(u0, coeffs, T::zero(), horizon, cfg).map(|(traj, _)| traj)
}

/// As [`solve_linear_fpe`], starting at clock `t0` and returning solve statistics.
pub fn solve_linear_fpe_from<T: Real, C: Coefficients<T> + ?Sized>(
    u0: &Slice<T>,
    coeffs: &C,
    t0: T,
    horizon: T,
    cfg: &SchemeConfig<T>,
) -> Result<(DensityTrajectory<T>, SolveStats)> {
    cfg.validate()?;
    check_unit_mass(u0, cfg)?;
    let grid = *u0.grid();
    let (n_steps, last) = cfg.time_steps(horizon);
    let mut stepper = ForwardStep::new(grid);
    let mut u = u0.values().to_vec();
    let mut traj = DensityTrajectory::from_slice(t0, u0.clone());
    let mut stats = SolveStats::default();
    let mut t = t0;
    for step in 0..n_steps {
        let dt = if step + 1 == n_steps { last } else { cfg.dt };
        let t_next = t0 + if step + 1 == n_steps { horizon } else { T::of_usize(step + 1) * cfg.dt };
        let sc = StepCoefficients::linear(coeffs, &grid, t, t_next, cfg.theta);
        sc.check_stability(cfg, dt, &grid)?;
        stepper.apply(&mut u, &sc, dt, cfg.theta);
        settle(&mut u, grid.dx(), t_next, |i| grid.center(i), cfg, &mut stats)?;
        stats.steps += 1;
        if (step + 1) % cfg.record_every == 0 || step + 1 == n_steps {
            traj.push(t_next, u.clone());
        }
        t = t_next;
    }
    Ok((traj, stats))
}
