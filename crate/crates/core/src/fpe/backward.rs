use crate::catalog::TerminalFn;
use crate::coeffs::Coefficients;
use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::scalar::Real;

use super::stencil::{thomas, ForwardStep, StepCoefficients};
use super::{SchemeConfig, Theta};

/// Spatial part of the space-time domain `(0, T) x D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    /// The whole window; paths only leave through the terminal time.
    FullWindow,
    Interval { left: f64, right: f64 },
}

impl Domain {
    pub fn contains(&self, x: f64) -> bool {
        match *self {
            Domain::FullWindow => true,
            Domain::Interval { left, right } => x > left && x < right,
        }
    }

    /// Right end used by boundary data; `+inf` for the full window.
    pub fn right(&self) -> f64 {
        match *self {
            Domain::FullWindow => f64::INFINITY,
            Domain::Interval { right, .. } => right,
        }
    }
}

/// `rho(t_k, x_j)` on a time mesh and a spatial node set.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField<T> {
    pub times: Vec<T>,
    pub nodes: Vec<T>,
    /// `values[k][j]` at `(times[k], nodes[j])`.
    pub values: Vec<Vec<T>>,
}

impl<T: Real> SpaceTimeField<T> {
    /// Bilinear interpolation, clamped to the mesh.
    pub fn value_at(&self, t: T, x: T) -> T {
        let (k0, k1, wt) = bracket(&self.times, t);
        let (j0, j1, wx) = bracket(&self.nodes, x);
        let at = |k: usize| self.values[k][j0] * (T::one() - wx) + self.values[k][j1] * wx;
        at(k0) * (T::one() - wt) + at(k1) * wt
    }

    pub fn at_time(&self, k: usize) -> &[T] {
        &self.values[k]
    }
}

fn bracket<T: Real>(xs: &[T], x: T) -> (usize, usize, T) {
    let n = xs.len();
    if n == 1 || x <= xs[0] {
        return (0, 0, T::zero());
    }
    if x >= xs[n - 1] {
        return (n - 1, n - 1, T::zero());
    }
    let k = xs.partition_point(|&s| s <= x) - 1;
    (k, k + 1, (x - xs[k]) / (xs[k + 1] - xs[k]))
}

/// Solves `d rho/dt + L_t rho = 0` backward from `rho(T) = F(T, .)` with
/// `rho = F` on the lateral boundary of `D`.
///
/// On the full window the step is the exact transpose of the forward scheme,
/// so `sum rho(0) u0 dx = sum F(T) u(T) dx` holds to round-off. On a proper
/// subinterval the solver uses a node grid with the endpoints as nodes and an
/// upwind generator stencil.
pub fn solve_backward_kolmogorov<T: Real, C: Coefficients<T> + ?Sized>(
    f: TerminalFn,
    coeffs: &C,
    domain: Domain,
    horizon: T,
    grid: &SpatialGrid<T>,
    cfg: &SchemeConfig<T>,
) -> Result<SpaceTimeField<T>> {
    cfg.validate()?;
    match domain {
        Domain::FullWindow => full_window(f, coeffs, horizon, grid, cfg),
        Domain::Interval { left, right } => {
            let (l, r) = (T::of(left), T::of(right));
            if !(l < r) || l < grid.x_min() || r > grid.x_max() {
                return Err(Error::InvalidParameter(format!(
                    "domain ({left}, {right}) must lie inside the window"
                )));
            }
            interval(f, coeffs, l, r, horizon, grid.dx(), cfg)
        }
    }
}

fn time_mesh<T: Real>(horizon: T, cfg: &SchemeConfig<T>) -> Vec<T> {
    let (n, _) = cfg.time_steps(horizon);
    (0..=n)
        .map(|k| if k == n { horizon } else { T::of_usize(k) * cfg.dt })
        .collect()
}

/// Recorded indices: every `record_every`-th step plus both ends.
fn recorded(n_steps: usize, every: usize) -> impl Fn(usize) -> bool {
    move |k| k % every == 0 || k == n_steps
}

fn full_window<T: Real, C: Coefficients<T> + ?Sized>(
    f: TerminalFn,
    coeffs: &C,
    horizon: T,
    grid: &SpatialGrid<T>,
    cfg: &SchemeConfig<T>,
) -> Result<SpaceTimeField<T>> {
    let times = time_mesh(horizon, cfg);
    let n_steps = times.len() - 1;
    let keep = recorded(n_steps, cfg.record_every);
    let nodes = grid.centers();
    let th = horizon.as_f64();
    let mut rho: Vec<T> = nodes
        .iter()
        .map(|&x| T::of(f.eval(th, x.as_f64(), f64::INFINITY)))
        .collect();
    let mut stepper = ForwardStep::new(*grid);
    let mut out = vec![rho.clone()];
    let mut out_times = vec![horizon];
    for k in (0..n_steps).rev() {
        let dt = times[k + 1] - times[k];
        let sc = StepCoefficients::linear(coeffs, grid, times[k], times[k + 1], cfg.theta);
        sc.check_stability(cfg, dt, grid)?;
        stepper.apply_transpose(&mut rho, &sc, dt, cfg.theta);
        if keep(k) {
            out.push(rho.clone());
            out_times.push(times[k]);
        }
    }
    out.reverse();
    out_times.reverse();
    Ok(SpaceTimeField {
        times: out_times,
        nodes,
        values: out,
    })
}

fn interval<T: Real, C: Coefficients<T> + ?Sized>(
    f: TerminalFn,
    coeffs: &C,
    left: T,
    right: T,
    horizon: T,
    dx: T,
    cfg: &SchemeConfig<T>,
) -> Result<SpaceTimeField<T>> {
    let m = ((right - left) / dx).round().to_usize().unwrap_or(8).max(8);
    let h = (right - left) / T::of_usize(m);
    let nodes: Vec<T> = (0..=m)
        .map(|j| if j == m { right } else { left + T::of_usize(j) * h })
        .collect();
    let times = time_mesh(horizon, cfg);
    let n_steps = times.len() - 1;
    let keep = recorded(n_steps, cfg.record_every);
    let xr = right.as_f64();
    let eval = |t: T, x: T| T::of(f.eval(t.as_f64(), x.as_f64(), xr));

    let mut rho: Vec<T> = nodes.iter().map(|&x| eval(horizon, x)).collect();
    let mut out = vec![rho.clone()];
    let mut out_times = vec![horizon];
    let interior = m - 1;
    let mut lower = vec![T::zero(); interior];
    let mut diag = vec![T::zero(); interior];
    let mut upper = vec![T::zero(); interior];
    let mut work = vec![T::zero(); interior];
    let mut rhs = vec![T::zero(); interior];
    let half_inv_h2 = T::one() / (T::of(2.0) * h * h);

    for k in (0..n_steps).rev() {
        let dt = times[k + 1] - times[k];
        let t = times[k];
        let mut max_rate = T::zero();
        for (j, &x) in nodes.iter().enumerate().take(m).skip(1) {
            let a = coeffs.diffusion(t, x);
            if a < T::zero() {
                return Err(Error::NegativeDiffusion {
                    t: t.as_f64(),
                    x: x.as_f64(),
                    a: a.as_f64(),
                });
            }
            let b = coeffs.drift(t, x);
            let lo = a * half_inv_h2 + (-b).max(T::zero()) / h;
            let up = a * half_inv_h2 + b.max(T::zero()) / h;
            max_rate = max_rate.max(lo + up);
            let i = j - 1;
            lower[i] = lo;
            upper[i] = up;
        }
        match cfg.theta {
            Theta::Explicit => {
                let bound = T::one() / max_rate;
                if dt > bound * T::of(1.0 + 1e-12) {
                    return Err(Error::CflViolation {
                        dt: dt.as_f64(),
                        bound: bound.as_f64(),
                    });
                }
                let prev = rho.clone();
                for j in 1..m {
                    let (lo, up) = (lower[j - 1], upper[j - 1]);
                    rho[j] = prev[j] + dt * (lo * prev[j - 1] + up * prev[j + 1] - (lo + up) * prev[j]);
                }
            }
            Theta::Implicit => {
                let b_left = eval(t, nodes[0]);
                let b_right = eval(t, nodes[m]);
                for i in 0..interior {
                    let (lo, up) = (lower[i], upper[i]);
                    rhs[i] = rho[i + 1];
                    diag[i] = T::one() + dt * (lo + up);
                    if i == 0 {
                        rhs[i] = rhs[i] + dt * lo * b_left;
                    }
                    if i + 1 == interior {
                        rhs[i] = rhs[i] + dt * up * b_right;
                    }
                }
                let lo_band: Vec<T> = (0..interior)
                    .map(|i| if i == 0 { T::zero() } else { -dt * lower[i] })
                    .collect();
                let up_band: Vec<T> = (0..interior)
                    .map(|i| if i + 1 == interior { T::zero() } else { -dt * upper[i] })
                    .collect();
                thomas(&lo_band, &diag, &up_band, &mut rhs, &mut work);
                rho[1..m].copy_from_slice(&rhs);
            }
        }
        rho[0] = eval(t, nodes[0]);
        rho[m] = eval(t, nodes[m]);
        if keep(k) {
            out.push(rho.clone());
            out_times.push(t);
        }
    }
    out.reverse();
    out_times.reverse();
    Ok(SpaceTimeField {
        times: out_times,
        nodes,
        values: out,
    })
}
