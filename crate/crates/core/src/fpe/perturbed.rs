use crate::coeffs::Coefficients;
use crate::density::{DensityTrajectory, Slice};
use crate::error::{Error, Result};
use crate::jumps::JumpKernel;
use crate::scalar::Real;

use super::stencil::{ForwardStep, StepCoefficients};
use super::{check_unit_mass, settle, SchemeConfig, SolveStats};

/// Forward equation with the adjoint jump term
/// `u -> integral c(y) q(x - y) u(y) dy - c(x) u(x)` added to the linear
/// operator. The jump part is advanced explicitly (requires `dt sup c <= 1`),
/// then one linear step follows.
///
/// Displacement probabilities are integrated over cells and renormalized per
/// source cell to the window, so the discrete kernel is conservative.
pub fn solve_perturbed_fpe<T: Real, C: Coefficients<T> + ?Sized>(
    u0: &Slice<T>,
    coeffs: &C,
    kernel: &JumpKernel,
    horizon: T,
    cfg: &SchemeConfig<T>,
) -> Result<DensityTrajectory<T>> {
    cfg.validate()?;
    check_unit_mass(u0, cfg)?;
    let grid = *u0.grid();
    let n = grid.n_cells();
    let offsets: Vec<(isize, T)> = kernel
        .displacement
        .offset_weights(grid.dx().as_f64())
        .into_iter()
        .map(|(k, w)| (k, T::of(w)))
        .collect();
    // In-window share of every source cell's jump law.
    let in_window: Vec<T> = (0..n as isize)
        .map(|j| {
            offsets
                .iter()
                .filter(|(k, _)| (0..n as isize).contains(&(j + k)))
                .map(|&(_, w)| w)
                .sum()
        })
        .collect();

    let (n_steps, last) = cfg.time_steps(horizon);
    let mut stepper = ForwardStep::new(grid);
    let mut u = u0.values().to_vec();
    let mut gained = vec![T::zero(); n];
    let mut rates = vec![T::zero(); n];
    let mut traj = DensityTrajectory::from_slice(T::zero(), u0.clone());
    let mut stats = SolveStats::default();
    let mut t = T::zero();
    for step in 0..n_steps {
        let dt = if step + 1 == n_steps { last } else { cfg.dt };
        let t_next = if step + 1 == n_steps { horizon } else { T::of_usize(step + 1) * cfg.dt };

        let mut max_c = 0.0f64;
        for (j, r) in rates.iter_mut().enumerate() {
            let c = kernel.rate(t.as_f64(), grid.center(j).as_f64());
            if !c.is_finite() || c < 0.0 {
                return Err(Error::KernelUnbounded(format!(
                    "rate {c} at x = {}",
                    grid.center(j)
                )));
            }
            max_c = max_c.max(c);
            *r = T::of(c);
        }
        if dt.as_f64() * max_c > 1.0 + 1e-12 {
            return Err(Error::CflViolation {
                dt: dt.as_f64(),
                bound: 1.0 / max_c,
            });
        }
        gained.iter_mut().for_each(|g| *g = T::zero());
        for j in 0..n {
            let out = rates[j] * u[j];
            if out == T::zero() || in_window[j] == T::zero() {
                continue;
            }
            let scale = out / in_window[j];
            for &(k, w) in &offsets {
                let i = j as isize + k;
                if (0..n as isize).contains(&i) {
                    gained[i as usize] = gained[i as usize] + scale * w;
                }
            }
            gained[j] = gained[j] - out;
        }
        for (v, g) in u.iter_mut().zip(&gained) {
            *v = *v + dt * *g;
        }

        let sc = StepCoefficients::linear(coeffs, &grid, t, t_next, cfg.theta);
        sc.check_stability(cfg, dt, &grid)?;
        stepper.apply(&mut u, &sc, dt, cfg.theta);
        settle(&mut u, grid.dx(), t_next, |i| grid.center(i), cfg, &mut stats)?;
        if (step + 1) % cfg.record_every == 0 || step + 1 == n_steps {
            traj.push(t_next, u.clone());
        }
        t = t_next;
    }
    Ok(traj)
}
