//! Probabilistic estimators: the space-time Dirichlet problem through exit
//! distributions, the terminal-marginal representation, entry-time capacities
//! and Lyapunov tail bounds.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::catalog::{LyapunovFn, TerminalFn};
use crate::coeffs::Coefficients;
use crate::density::Slice;
use crate::error::{Error, Result};
use crate::fpe::{solve_backward_kolmogorov, solve_linear_fpe, Domain, SchemeConfig};
use crate::grid::SpatialGrid;
use crate::rng::{normal, Purpose};
use crate::sde::{em_update, step_plan, InitialLaw, McConfig};
use crate::stats::{combined_stderr, wilson_upper, Estimate, Z_99};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitReason {
    SideBoundary,
    TerminalTime,
}

/// First exit of one path from `(0, T) x D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitRecord {
    pub path: usize,
    /// Elapsed time `tau` until the exit.
    pub tau: f64,
    /// Clock `s + tau` at the exit.
    pub clock: f64,
    pub position: f64,
    pub reason: ExitReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HittingRun {
    pub estimate: Estimate,
    pub exits: Vec<ExitRecord>,
}

/// Runs one path from clock `s` at `x` until it leaves the open interval or
/// the clock reaches `horizon`. A step ending outside the domain is an exit;
/// the crossing time is interpolated linearly along the step and the exit
/// point is put on the boundary.
fn first_exit<C: Coefficients<f64> + ?Sized>(
    coeffs: &C,
    domain: Domain,
    horizon: f64,
    s: f64,
    x: f64,
    dt: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<(f64, f64, ExitReason)> {
    let (n, last) = step_plan(horizon - s, dt);
    let mut x = x;
    for k in 0..n {
        let h = if k + 1 == n { last } else { dt };
        let t = s + k as f64 * dt;
        let y = em_update(coeffs, t, x, h, normal(rng))?;
        if let Domain::Interval { left, right } = domain {
            let side = if y <= left {
                Some(left)
            } else if y >= right {
                Some(right)
            } else {
                None
            };
            if let Some(b) = side {
                let frac = ((b - x) / (y - x)).clamp(0.0, 1.0);
                return Ok((t - s + frac * h, b, ExitReason::SideBoundary));
            }
        }
        x = y;
    }
    Ok((horizon - s, x, ExitReason::TerminalTime))
}

/// Monte Carlo value of `rho(s, x) = E_{s,x} F(tau, X(tau))` for the first
/// space-time exit `tau` from `(0, T) x D`.
pub fn estimate_hitting_solution<C: Coefficients<f64> + ?Sized>(
    f: TerminalFn,
    coeffs: &C,
    domain: Domain,
    horizon: f64,
    start: (f64, f64),
    mc: &McConfig,
) -> Result<HittingRun> {
    mc.validate()?;
    let (s, x) = start;
    if !(s >= 0.0 && s < horizon) || !domain.contains(x) {
        return Err(Error::StartOutsideDomain { s, x });
    }
    let right = domain.right();
    let exits: Vec<ExitRecord> = (0..mc.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = mc.stream(p, Purpose::Diffusion);
            let (tau, position, reason) = first_exit(coeffs, domain, horizon, s, x, mc.dt, &mut rng)?;
            Ok(ExitRecord {
                path: p,
                tau,
                clock: s + tau,
                position,
                reason,
            })
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = exits.iter().map(|e| f.eval(e.clock, e.position, right)).collect();
    Ok(HittingRun {
        estimate: Estimate::from_samples(&values),
        exits,
    })
}

/// One probe of the Dirichlet comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeComparison {
    pub s: f64,
    pub x: f64,
    pub pde: f64,
    pub monte_carlo: Estimate,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compares [`estimate_hitting_solution`] with the backward Kolmogorov solve at
/// each probe; pass iff the gap is within `3 stderr + bias_budget`.
#[allow(clippy::too_many_arguments)]
pub fn dirichlet_consistency<C: Coefficients<f64> + ?Sized>(
    f: TerminalFn,
    coeffs: &C,
    domain: Domain,
    horizon: f64,
    probes: &[(f64, f64)],
    grid: &SpatialGrid<f64>,
    scheme: &SchemeConfig<f64>,
    mc: &McConfig,
    bias_budget: f64,
) -> Result<Vec<ProbeComparison>> {
    let field = solve_backward_kolmogorov(f, coeffs, domain, horizon, grid, scheme)?;
    probes
        .iter()
        .enumerate()
        .map(|(j, &(s, x))| {
            let run = estimate_hitting_solution(f, coeffs, domain, horizon, (s, x), &mc.replicate(mc.replicate + j as u64))?;
            let pde = field.value_at(s, x);
            let tolerance = 3.0 * run.estimate.stderr + bias_budget;
            Ok(ProbeComparison {
                s,
                x,
                pde,
                monte_carlo: run.estimate,
                tolerance,
                pass: (run.estimate.mean - pde).abs() <= tolerance,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepresentationReport {
    /// `int rho(0, .) d mu_0` by Monte Carlo.
    pub monte_carlo: Estimate,
    /// `int F d mu_T` from the forward solver.
    pub pde: f64,
    pub discrepancy: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Checks `int F d mu_T = int rho(0, .) d mu_0` on the full window: the left
/// side from the forward solver, the right side as `E F(X_T)` with
/// `X_0 ~ mu_0`. Tolerance `3 stderr + 1e-2`.
pub fn verify_representation<C: Coefficients<f64> + ?Sized>(
    f: TerminalFn,
    coeffs: &C,
    horizon: f64,
    mu0: &Slice<f64>,
    scheme: &SchemeConfig<f64>,
    mc: &McConfig,
) -> Result<RepresentationReport> {
    mc.validate()?;
    let traj = solve_linear_fpe(mu0, coeffs, horizon, &scheme.recording_every(usize::MAX))?;
    let pde = traj.last().integrate(|x| f.eval(horizon, x, f64::INFINITY));
    let law = InitialLaw::GridDensity(mu0.clone());
    let cdf = law.cdf();
    let values: Vec<f64> = (0..mc.n_paths)
        .into_par_iter()
        .map(|p| {
            let x0 = law.sample_with(&cdf, &mut mc.stream(p, Purpose::Initial));
            let mut rng = mc.stream(p, Purpose::Diffusion);
            let (_, x, _) = first_exit(coeffs, Domain::FullWindow, horizon, 0.0, x0, mc.dt, &mut rng)?;
            Ok(f.eval(horizon, x, f64::INFINITY))
        })
        .collect::<Result<_>>()?;
    let monte_carlo = Estimate::from_samples(&values);
    let discrepancy = (monte_carlo.mean - pde).abs();
    let tolerance = 3.0 * monte_carlo.stderr + 1e-2;
    Ok(RepresentationReport {
        monte_carlo,
        pde,
        discrepancy,
        tolerance,
        pass: discrepancy <= tolerance,
    })
}

/// Finite union of open intervals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OpenSet {
    intervals: Vec<(f64, f64)>,
}

impl OpenSet {
    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Self> {
        for &(l, r) in &intervals {
            if !(l < r) {
                return Err(Error::InvalidParameter(format!("empty interval ({l}, {r})")));
            }
        }
        Ok(OpenSet { intervals })
    }

    pub fn empty() -> Self {
        OpenSet::default()
    }

    pub fn interval(l: f64, r: f64) -> Result<Self> {
        Self::new(vec![(l, r)])
    }

    pub fn union(&self, other: &OpenSet) -> OpenSet {
        let mut intervals = self.intervals.clone();
        intervals.extend_from_slice(&other.intervals);
        OpenSet { intervals }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(l, r)| x > l && x < r)
    }

    /// Fraction of the step from `x` to `y` at which the segment first enters
    /// the set, if it does.
    fn entry_fraction(&self, x: f64, y: f64) -> Option<f64> {
        self.intervals
            .iter()
            .filter_map(|&(l, r)| {
                if x.max(y) <= l || x.min(y) >= r {
                    None
                } else if x > l && x < r {
                    Some(0.0)
                } else if x <= l {
                    Some((l - x) / (y - x))
                } else {
                    Some((r - x) / (y - x))
                }
            })
            .min_by(f64::total_cmp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityEstimate {
    /// Monte Carlo value of `E exp(-alpha D_G)`.
    pub estimate: Estimate,
    /// Paths not entering by `T_max` contribute `exp(-alpha T_max)`, so the
    /// truncated estimator overstates the capacity by at most this much.
    pub truncation_bias: f64,
    /// Fraction of paths that entered before `T_max`.
    pub entered: f64,
}

/// `E exp(-alpha D_G)` for each set, where `D_G` is the entry time (zero when
/// the path starts inside). All sets see the same paths, so the estimates are
/// pathwise monotone under inclusion.
pub fn estimate_capacities<C: Coefficients<f64> + ?Sized>(
    sets: &[OpenSet],
    alpha: f64,
    coeffs: &C,
    mu0: &InitialLaw,
    t_max: f64,
    mc: &McConfig,
) -> Result<Vec<CapacityEstimate>> {
    mc.validate()?;
    if !(alpha > 0.0) || !(t_max > 0.0) {
        return Err(Error::InvalidParameter(format!("need alpha > 0 and T_max > 0, got {alpha}, {t_max}")));
    }
    let m = sets.len();
    let cdf = mu0.cdf();
    let (n, last) = step_plan(t_max, mc.dt);
    let entry: Vec<Vec<f64>> = (0..mc.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut x = mu0.sample_with(&cdf, &mut mc.stream(p, Purpose::Initial));
            let mut times: Vec<f64> = sets
                .iter()
                .map(|g| if g.contains(x) { 0.0 } else { f64::INFINITY })
                .collect();
            let mut open = times.iter().filter(|t| t.is_infinite()).count();
            let mut rng = mc.stream(p, Purpose::Diffusion);
            for k in 0..n {
                if open == 0 {
                    break;
                }
                let h = if k + 1 == n { last } else { mc.dt };
                let t = k as f64 * mc.dt;
                let y = em_update(coeffs, t, x, h, normal(&mut rng))?;
                for (g, slot) in sets.iter().zip(times.iter_mut()) {
                    if slot.is_infinite() {
                        if let Some(frac) = g.entry_fraction(x, y) {
                            *slot = t + frac * h;
                            open -= 1;
                        }
                    }
                }
                x = y;
            }
            Ok(times)
        })
        .collect::<Result<_>>()?;
    let floor = (-alpha * t_max).exp();
    Ok((0..m)
        .map(|j| {
            let values: Vec<f64> = entry
                .iter()
                .map(|ts| if ts[j].is_finite() { (-alpha * ts[j]).exp() } else { floor })
                .collect();
            let entered = entry.iter().filter(|ts| ts[j].is_finite()).count() as f64 / mc.n_paths as f64;
            CapacityEstimate {
                estimate: Estimate::from_samples(&values),
                truncation_bias: floor,
                entered,
            }
        })
        .collect())
}

pub fn estimate_capacity<C: Coefficients<f64> + ?Sized>(
    set: &OpenSet,
    alpha: f64,
    coeffs: &C,
    mu0: &InitialLaw,
    t_max: f64,
    mc: &McConfig,
) -> Result<CapacityEstimate> {
    estimate_capacities(std::slice::from_ref(set), alpha, coeffs, mu0, t_max, mc).map(|v| v[0])
}

/// `V`, its growth rate `delta` and the tail level `eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovSpec {
    pub v: LyapunovFn,
    pub delta: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorCheck {
    /// Largest `b V' + a V'' / 2 - delta V` over the samples.
    pub worst_residual: f64,
    pub t: f64,
    pub x: f64,
    pub pass: bool,
}

/// Samples the generator residual `b V' + a V''/2 - delta V` on the cell
/// centers at each time; passes iff it never exceeds `1e-12`.
pub fn check_generator_bound<C: Coefficients<f64> + ?Sized>(
    spec: &LyapunovSpec,
    coeffs: &C,
    grid: &SpatialGrid<f64>,
    times: &[f64],
) -> GeneratorCheck {
    let mut worst = GeneratorCheck {
        worst_residual: f64::NEG_INFINITY,
        t: f64::NAN,
        x: f64::NAN,
        pass: true,
    };
    for &t in times {
        for x in grid.centers() {
            let v = spec.v;
            let r = coeffs.drift(t, x) * v.first(x) + 0.5 * coeffs.diffusion(t, x) * v.second(x)
                - spec.delta * v.value(x);
            if r > worst.worst_residual {
                worst = GeneratorCheck {
                    worst_residual: r,
                    t,
                    x,
                    pass: true,
                };
            }
        }
    }
    worst.pass = worst.worst_residual <= 1e-12;
    worst
}

fn require_generator_bound<C: Coefficients<f64> + ?Sized>(
    spec: &LyapunovSpec,
    coeffs: &C,
    grid: &SpatialGrid<f64>,
    s: f64,
    horizon: f64,
) -> Result<()> {
    let times: Vec<f64> = (0..=10).map(|j| s + horizon * j as f64 / 10.0).collect();
    let g = check_generator_bound(spec, coeffs, grid, &times);
    if g.pass {
        Ok(())
    } else {
        Err(Error::GeneratorBoundFailed {
            residual: g.worst_residual,
            t: g.t,
            x: g.x,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailReport {
    pub p_hat: f64,
    pub successes: usize,
    pub n: usize,
    /// One-sided 99% Wilson upper bound of `p_hat`.
    pub upper: f64,
    /// `exp(delta T) V(x) / eps`.
    pub bound: f64,
    pub pass: bool,
}

/// Fraction of paths whose running maximum of `V` (over the Euler steps)
/// reaches `eps` by elapsed time `T`, against `exp(delta T) V(x) / eps`.
/// Refuses to run unless the generator bound holds on `check_grid`.
pub fn estimate_tail_bound<C: Coefficients<f64> + ?Sized>(
    spec: &LyapunovSpec,
    coeffs: &C,
    start: (f64, f64),
    horizon: f64,
    mc: &McConfig,
    check_grid: &SpatialGrid<f64>,
) -> Result<TailReport> {
    mc.validate()?;
    let (s, x0) = start;
    require_generator_bound(spec, coeffs, check_grid, s, horizon)?;
    let (n, last) = step_plan(horizon, mc.dt);
    let hits: Vec<bool> = (0..mc.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = mc.stream(p, Purpose::Diffusion);
            let mut x = x0;
            if spec.v.value(x) >= spec.eps {
                return Ok(true);
            }
            for k in 0..n {
                let h = if k + 1 == n { last } else { mc.dt };
                x = em_update(coeffs, s + k as f64 * mc.dt, x, h, normal(&mut rng))?;
                if spec.v.value(x) >= spec.eps {
                    return Ok(true);
                }
            }
            Ok(false)
        })
        .collect::<Result<_>>()?;
    let successes = hits.iter().filter(|&&h| h).count();
    let upper = wilson_upper(successes, mc.n_paths, Z_99);
    let bound = (spec.delta * horizon).exp() * spec.v.value(x0) / spec.eps;
    Ok(TailReport {
        p_hat: successes as f64 / mc.n_paths as f64,
        successes,
        n: mc.n_paths,
        upper,
        bound,
        pass: upper <= bound,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupermartingaleReport {
    /// Elapsed times, starting with 0.
    pub times: Vec<f64>,
    /// `mean exp(-delta t) V(X_t)` at each time.
    pub values: Vec<Estimate>,
    /// Largest `m(t_{j+1}) - m(t_j) - 3 stderr` over consecutive pairs.
    pub worst_excess: f64,
    pub pass: bool,
}

/// Checks that `m(t) = E exp(-delta t) V(X_t)` does not increase across the
/// checkpoints beyond three combined standard errors.
pub fn check_supermartingale<C: Coefficients<f64> + ?Sized>(
    spec: &LyapunovSpec,
    coeffs: &C,
    start: (f64, f64),
    checkpoints: &[f64],
    mc: &McConfig,
    check_grid: &SpatialGrid<f64>,
) -> Result<SupermartingaleReport> {
    mc.validate()?;
    let (s, x0) = start;
    let mut times = vec![0.0];
    times.extend(checkpoints.iter().copied().filter(|&t| t > 0.0));
    for w in times.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidParameter("checkpoints must increase".into()));
        }
    }
    let horizon = *times.last().unwrap_or(&0.0);
    require_generator_bound(spec, coeffs, check_grid, s, horizon)?;
    let samples: Vec<Vec<f64>> = (0..mc.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = mc.stream(p, Purpose::Diffusion);
            let mut x = x0;
            let mut t = 0.0;
            let mut out = vec![spec.v.value(x0)];
            for w in times.windows(2) {
                let (n, last) = step_plan(w[1] - w[0], mc.dt);
                for k in 0..n {
                    let h = if k + 1 == n { last } else { mc.dt };
                    x = em_update(coeffs, s + t + k as f64 * mc.dt, x, h, normal(&mut rng))?;
                }
                t = w[1];
                out.push((-spec.delta * t).exp() * spec.v.value(x));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let values: Vec<Estimate> = (0..times.len())
        .map(|j| Estimate::from_samples(&samples.iter().map(|v| v[j]).collect::<Vec<_>>()))
        .collect();
    let worst_excess = values
        .windows(2)
        .map(|w| w[1].mean - w[0].mean - 3.0 * combined_stderr(w[0].stderr, w[1].stderr))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(SupermartingaleReport {
        times,
        values,
        worst_excess,
        pass: worst_excess <= 0.0,
    })
}

/// One line of the estimate CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub quantity: String,
    pub estimate: f64,
    pub stderr: f64,
    pub bound: f64,
    pub pass: bool,
}

/// CSV `quantity,estimate,stderr,bound,verdict`.
pub fn write_estimates<W: Write>(rows: &[EstimateRow], mut w: W) -> io::Result<()> {
    writeln!(w, "quantity,estimate,stderr,bound,verdict")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.16e},{:.16e},{:.16e},{}",
            r.quantity,
            r.estimate,
            r.stderr,
            r.bound,
            if r.pass { "PASS" } else { "FAIL" }
        )?;
    }
    Ok(())
}
