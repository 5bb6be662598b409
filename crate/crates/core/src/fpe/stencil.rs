use crate::coeffs::{Coefficients, PorousMedia};
use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::scalar::Real;

use super::{SchemeConfig, Theta};

/// Coefficients frozen for one step: `a` at cell centers, drift velocity at
/// the `n - 1` interior faces (edge faces carry zero flux).
pub(crate) struct StepCoefficients<T> {
    pub a: Vec<T>,
    pub b_face: Vec<T>,
}

impl<T: Real> StepCoefficients<T> {
    /// Drift at `t`; diffusion at `t_next` when implicit, else at `t`.
    pub fn linear<C: Coefficients<T> + ?Sized>(
        coeffs: &C,
        grid: &SpatialGrid<T>,
        t: T,
        t_next: T,
        theta: Theta,
    ) -> Self {
        let ta = match theta {
            Theta::Explicit => t,
            Theta::Implicit => t_next,
        };
        let n = grid.n_cells();
        StepCoefficients {
            a: (0..n).map(|i| coeffs.diffusion(ta, grid.center(i))).collect(),
            b_face: (1..n).map(|f| coeffs.drift(t, grid.edge(f))).collect(),
        }
    }

    /// Nemytskii coefficients lagged at the current density `u`. The face
    /// velocity `D(x) b(u)` uses the upwind density (`b >= 0`, so the sign of
    /// `D` picks the side).
    pub fn porous(porous: &PorousMedia, grid: &SpatialGrid<T>, u: &[T]) -> Self {
        let n = grid.n_cells();
        let a = (0..n)
            .map(|i| porous.diffusion_at(grid.center(i), u[i]))
            .collect();
        let b_face = (1..n)
            .map(|f| {
                let x = grid.edge(f);
                let d = porous.d.eval(x);
                let up = if d >= T::zero() { u[f - 1] } else { u[f] };
                d * porous.b.eval(up.max(T::zero()))
            })
            .collect();
        StepCoefficients { a, b_face }
    }

    pub fn check_stability(&self, cfg: &SchemeConfig<T>, dt: T, grid: &SpatialGrid<T>) -> Result<()> {
        let mut max_a = T::zero();
        for (i, &a) in self.a.iter().enumerate() {
            if a < T::zero() || !a.is_finite() {
                return Err(Error::NegativeDiffusion {
                    t: f64::NAN,
                    x: grid.center(i).as_f64(),
                    a: a.as_f64(),
                });
            }
            max_a = max_a.max(a);
        }
        let max_b = self.b_face.iter().fold(T::zero(), |m, b| m.max(b.abs()));
        let bound = cfg.stability_bound(max_a, max_b, grid.dx());
        if dt > bound * T::of(1.0 + 1e-12) {
            return Err(Error::CflViolation {
                dt: dt.as_f64(),
                bound: bound.as_f64(),
            });
        }
        Ok(())
    }
}

/// Reusable buffers for forward steps and their transposes.
pub(crate) struct ForwardStep<T> {
    grid: SpatialGrid<T>,
    scratch: Vec<T>,
    lower: Vec<T>,
    diag: Vec<T>,
    upper: Vec<T>,
    c_prime: Vec<T>,
}

impl<T: Real> ForwardStep<T> {
    pub fn new(grid: SpatialGrid<T>) -> Self {
        let n = grid.n_cells();
        ForwardStep {
            grid,
            scratch: vec![T::zero(); n],
            lower: vec![T::zero(); n],
            diag: vec![T::zero(); n],
            upper: vec![T::zero(); n],
            c_prime: vec![T::zero(); n],
        }
    }

    /// `u <- A^{-1} M u` (implicit) or `u <- (M + dt Dif) u` (explicit), where
    /// `M` is the explicit upwind drift update and `Dif` the diffusion stencil.
    pub fn apply(&mut self, u: &mut [T], sc: &StepCoefficients<T>, dt: T, theta: Theta) {
        let n = u.len();
        let dx = self.grid.dx();
        let r = dt / dx;
        // Drift: scratch = M u.
        self.scratch.copy_from_slice(u);
        for f in 0..n - 1 {
            let b = sc.b_face[f];
            let flux = if b > T::zero() { b * u[f] } else { b * u[f + 1] };
            self.scratch[f] = self.scratch[f] - r * flux;
            self.scratch[f + 1] = self.scratch[f + 1] + r * flux;
        }
        let c = dt / (T::of(2.0) * dx * dx);
        match theta {
            Theta::Explicit => {
                for f in 0..n - 1 {
                    let g = c * (sc.a[f + 1] * u[f + 1] - sc.a[f] * u[f]);
                    self.scratch[f] = self.scratch[f] + g;
                    self.scratch[f + 1] = self.scratch[f + 1] - g;
                }
                u.copy_from_slice(&self.scratch);
            }
            Theta::Implicit => {
                self.assemble(&sc.a, c, false);
                u.copy_from_slice(&self.scratch);
                self.solve(u);
            }
        }
    }

    /// Adjoint of [`ForwardStep::apply`] on test functions: `rho <- M^T A^{-T} rho`.
    pub fn apply_transpose(&mut self, rho: &mut [T], sc: &StepCoefficients<T>, dt: T, theta: Theta) {
        let n = rho.len();
        let dx = self.grid.dx();
        let c = dt / (T::of(2.0) * dx * dx);
        match theta {
            Theta::Explicit => {
                // y = rho + dt Dif^T rho, computed into scratch and merged below.
                self.scratch.copy_from_slice(rho);
                for f in 0..n - 1 {
                    let g = rho[f + 1] - rho[f];
                    self.scratch[f] = self.scratch[f] + c * sc.a[f] * g;
                    self.scratch[f + 1] = self.scratch[f + 1] - c * sc.a[f + 1] * g;
                }
            }
            Theta::Implicit => {
                self.assemble(&sc.a, c, true);
                self.scratch.copy_from_slice(rho);
                let mut tmp = std::mem::take(&mut self.scratch);
                self.solve(&mut tmp);
                self.scratch = tmp;
            }
        }
        // rho = M^T y with y in scratch; the explicit diffusion part of the
        // explicit scheme acts on rho itself, the drift part on rho as well.
        let r = dt / dx;
        match theta {
            Theta::Explicit => {
                for f in 0..n - 1 {
                    let b = sc.b_face[f];
                    let g = rho[f + 1] - rho[f];
                    if b > T::zero() {
                        self.scratch[f] = self.scratch[f] + r * b * g;
                    } else {
                        self.scratch[f + 1] = self.scratch[f + 1] + r * b * g;
                    }
                }
                rho.copy_from_slice(&self.scratch);
            }
            Theta::Implicit => {
                let y = &self.scratch;
                rho.copy_from_slice(y);
                for f in 0..n - 1 {
                    let b = sc.b_face[f];
                    let g = y[f + 1] - y[f];
                    if b > T::zero() {
                        rho[f] = rho[f] + r * b * g;
                    } else {
                        rho[f + 1] = rho[f + 1] + r * b * g;
                    }
                }
            }
        }
    }

    /// Tridiagonal `I - dt Dif` (or its transpose) with zero-flux edges.
    fn assemble(&mut self, a: &[T], c: T, transpose: bool) {
        let n = a.len();
        for i in 0..n {
            let neighbours = if i == 0 || i + 1 == n { T::one() } else { T::of(2.0) };
            self.diag[i] = T::one() + c * neighbours * a[i];
            if transpose {
                self.lower[i] = if i > 0 { -c * a[i] } else { T::zero() };
                self.upper[i] = if i + 1 < n { -c * a[i] } else { T::zero() };
            } else {
                self.lower[i] = if i > 0 { -c * a[i - 1] } else { T::zero() };
                self.upper[i] = if i + 1 < n { -c * a[i + 1] } else { T::zero() };
            }
        }
    }

    /// Thomas algorithm on the assembled system, right-hand side `x` in place.
    fn solve(&mut self, x: &mut [T]) {
        thomas(&self.lower, &self.diag, &self.upper, x, &mut self.c_prime);
    }
}

/// Solves a tridiagonal system in place; `work` must have the same length.
pub(crate) fn thomas<T: Real>(lower: &[T], diag: &[T], upper: &[T], x: &mut [T], work: &mut [T]) {
    let n = x.len();
    work[0] = upper[0] / diag[0];
    x[0] = x[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * work[i - 1];
        work[i] = if i + 1 < n { upper[i] / m } else { T::zero() };
        x[i] = (x[i] - lower[i] * x[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        x[i] = x[i] - work[i] * x[i + 1];
    }
}
