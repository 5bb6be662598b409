use crate::coeffs::{CoefficientModel, Linearized, PorousMedia};
use crate::density::{DensityTrajectory, Slice};
use crate::error::{Error, Result};
use crate::scalar::Real;

use super::stencil::{ForwardStep, StepCoefficients};
use super::{check_unit_mass, settle, SchemeConfig, SolveStats};

/// Samples of `r` used to spot-check `beta_r > 0`.
const BETA_SAMPLES: usize = 64;

/// Spot-checks `beta_r(x, r) > 0` for `r` in `[0, r_max]` at the given points.
pub(crate) fn check_monotone_beta<T: Real>(porous: &PorousMedia, xs: &[T], r_max: T) -> Result<()> {
    for &x in xs {
        for k in 0..=BETA_SAMPLES {
            let r = r_max * T::of_usize(k) / T::of_usize(BETA_SAMPLES);
            let br = porous.beta.beta_r(x, r);
            if !(br > T::zero()) {
                return Err(Error::NonmonotoneBeta {
                    r: r.as_f64(),
                    beta_r: br.as_f64(),
                });
            }
        }
    }
    Ok(())
}

/// Semi-implicit solve of `du/dt = Lap beta(x, u) - (D(x) b(u) u)'`.
///
/// Each step freezes the Nemytskii quotient `a = 2 beta(x, u) / u` and the
/// upwind face velocity `D b(u)` at the previous slice, then takes one step of
/// the linear scheme. For `beta(r) = r` and `D = 0` this is exactly the linear
/// solver with `a = 2`, `b = 0`.
pub fn solve_porous_media<T: Real>(
    u0: &Slice<T>,
    porous: &PorousMedia,
    horizon: T,
    cfg: &SchemeConfig<T>,
) -> Result<DensityTrajectory<T>> {
    solve_porous_media_with_stats(u0, porous, horizon, cfg).map(|(traj, _)| traj)
}

pub fn solve_porous_media_with_stats<T: Real>(
    u0: &Slice<T>,
    porous: &PorousMedia,
    horizon: T,
    cfg: &SchemeConfig<T>,
) -> Result<(DensityTrajectory<T>, SolveStats)> {
    cfg.validate()?;
    check_unit_mass(u0, cfg)?;
    let grid = *u0.grid();
    let u_max = u0.values().iter().copied().fold(T::zero(), T::max);
    check_monotone_beta(porous, &grid.centers(), u_max)?;

    let (n_steps, last) = cfg.time_steps(horizon);
    let mut stepper = ForwardStep::new(grid);
    let mut u = u0.values().to_vec();
    let mut traj = DensityTrajectory::from_slice(T::zero(), u0.clone());
    let mut stats = SolveStats::default();
    for step in 0..n_steps {
        let dt = if step + 1 == n_steps { last } else { cfg.dt };
        let t_next = if step + 1 == n_steps { horizon } else { T::of_usize(step + 1) * cfg.dt };
        let sc = StepCoefficients::porous(porous, &grid, &u);
        sc.check_stability(cfg, dt, &grid)?;
        stepper.apply(&mut u, &sc, dt, cfg.theta);
        settle(&mut u, grid.dx(), t_next, |i| grid.center(i), cfg, &mut stats)?;
        stats.steps += 1;
        if (step + 1) % cfg.record_every == 0 || step + 1 == n_steps {
            traj.push(t_next, u.clone());
        }
    }
    Ok((traj, stats))
}

/// Freezes a porous-media trajectory into linear coefficients
/// `a^u = 2 beta(x, u) / u`, `b^u = D(x) b(u)`.
pub fn linearize<T: Real>(traj: &DensityTrajectory<T>, porous: &PorousMedia) -> CoefficientModel<T> {
    CoefficientModel::Linearized(Box::new(Linearized {
        trajectory: traj.clone(),
        porous: *porous,
    }))
}
