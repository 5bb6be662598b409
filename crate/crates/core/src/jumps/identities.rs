use rayon::prelude::*;

use crate::catalog::{PsiFn, TestFn};
use crate::coeffs::Coefficients;
use crate::ensemble::PathBundle;
use crate::error::{Error, Result};
use crate::fpe::{solve_perturbed_fpe, SchemeConfig};
use crate::grid::SpatialGrid;
use crate::sde::{sample_initial_dim, step_plan, InitialLaw, McConfig, SimConfig};
use crate::stats::{combined_stderr, Estimate};
use crate::verify::{check_superposition, VerdictRow};

use super::simulate::{run_path, simulate_jump_process, PathEnd, PathObserver, PathStreams};
use super::JumpKernel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompensatorReport {
    pub psi: PsiFn,
    pub t: f64,
    /// Mean over paths of `sum psi(X(s-), X(s))` over jumps up to `t`.
    pub lhs: Estimate,
    /// Mean over paths of `int_0^t c(X) int psi(X, y) q(dy - X) ds`.
    pub rhs: Estimate,
    /// Standard error of the paired difference.
    pub stderr: f64,
    pub pass: bool,
}

/// Checks `E sum_{s <= t} psi(X(s-), X(s)) = E int_0^t int psi(X, y) K(X, dy) ds`
/// on recorded jump paths. The time integral is a left-point sum over the
/// recorded steps; pass iff the paired difference is within 3 standard errors.
pub fn check_jump_compensator(
    paths: &PathBundle<f64>,
    kernel: &JumpKernel,
    psi: PsiFn,
    t: f64,
) -> Result<CompensatorReport> {
    let k_t = paths.step_of(t).ok_or(Error::CheckpointOutsideTrajectory(t))?;
    let s = paths.start_clock();
    let cutoff = s + t + 1e-9 * paths.dt();
    let mut lhs = vec![0.0; paths.n_paths()];
    for e in paths.events().iter().filter(|e| e.t <= cutoff) {
        lhs[e.path] += psi.eval(e.x_pre, e.x_post);
    }
    let mark = kernel.mark_mean(psi);
    let h = paths.dt();
    let rhs: Vec<f64> = (0..paths.n_paths())
        .map(|p| {
            (0..k_t)
                .map(|k| kernel.rate(paths.clock_at(k), paths.state(p, k, 0)))
                .sum::<f64>()
                * mark
                * h
        })
        .collect();
    let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    let d = Estimate::from_samples(&diff);
    let pass = d.mean.abs() <= 3.0 * d.stderr || d.mean.abs() <= 1e-12;
    Ok(CompensatorReport {
        psi,
        t,
        lhs: Estimate::from_samples(&lhs),
        rhs: Estimate::from_samples(&rhs),
        stderr: d.stderr,
        pass,
    })
}

/// Levels of the nested resolvent term simulated through the identity
/// before falling back to the direct estimator.
pub const RESOLVENT_DEPTH: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolventReport {
    /// Direct estimate of `U^K f(x)` from jump paths.
    pub direct: Estimate,
    /// `U' f(x)`: jump-free paths discounted by `exp(-alpha t - int c)`.
    pub u_prime: Estimate,
    /// `U' (K U^K f)(x)`, sampled at the first jump.
    pub nested: Estimate,
    /// `u_prime + nested`.
    pub rhs: Estimate,
    /// `|f|_inf exp(-alpha t_max) / alpha`.
    pub truncation_budget: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// `int e^{-alpha t} f(X_t) dt` along the path, exact on each segment.
struct Discounted {
    alpha: f64,
    f: TestFn,
    acc: f64,
}

fn discount_integral(alpha: f64, t0: f64, t1: f64) -> f64 {
    if alpha > 0.0 {
        ((-alpha * t0).exp() - (-alpha * t1).exp()) / alpha
    } else {
        t1 - t0
    }
}

impl PathObserver for Discounted {
    fn segment(&mut self, t0: f64, t1: f64, x: f64) {
        self.acc += self.f.eval(x) * discount_integral(self.alpha, t0, t1);
    }
}

/// As [`Discounted`] with the extra killing weight `exp(-int_0^t c)`.
struct Killed<'a> {
    alpha: f64,
    f: TestFn,
    kernel: &'a JumpKernel,
    s: f64,
    hazard: f64,
    acc: f64,
}

impl PathObserver for Killed<'_> {
    fn segment(&mut self, t0: f64, t1: f64, x: f64) {
        let c = self.kernel.rate(self.s + t0, x);
        let w = (-self.alpha * t0 - self.hazard).exp();
        let k = self.alpha + c;
        let len = t1 - t0;
        let integral = if k > 0.0 { -(-k * len).exp_m1() / k } else { len };
        self.acc += self.f.eval(x) * w * integral;
        self.hazard += c * len;
    }
}

struct FirstJump {
    hit: Option<(f64, f64)>,
}

impl PathObserver for FirstJump {
    fn jump(&mut self, t: f64, _pre: f64, post: f64) -> bool {
        self.hit = Some((t, post));
        false
    }
}

#[derive(Clone, Copy)]
enum Piece {
    Direct = 0,
    UPrime = 1,
    Nested = 2,
}

struct Resolvent<'a, C: ?Sized> {
    coeffs: &'a C,
    kernel: &'a JumpKernel,
    f: TestFn,
    alpha: f64,
    mc: &'a McConfig,
}

impl<C: Coefficients<f64> + ?Sized> Resolvent<'_, C> {
    fn streams(&self, p: usize, piece: Piece, depth: usize) -> PathStreams {
        let rep = self.mc.replicate * 64 + 4 * depth as u64 + piece as u64;
        PathStreams::new(self.mc.seed, p, rep)
    }

    fn run<O: PathObserver>(&self, kernel: &JumpKernel, s: f64, x: f64, horizon: f64, rng: &mut PathStreams, obs: &mut O) -> Result<()> {
        let (n, last) = step_plan(horizon, self.mc.dt);
        run_path(self.coeffs, kernel, s, x, n, self.mc.dt, last, rng, obs).map(|_| ())
    }

    fn direct(&self, p: usize, depth: usize, s: f64, x: f64, horizon: f64) -> Result<f64> {
        let mut obs = Discounted {
            alpha: self.alpha,
            f: self.f,
            acc: 0.0,
        };
        self.run(self.kernel, s, x, horizon, &mut self.streams(p, Piece::Direct, depth), &mut obs)?;
        Ok(obs.acc)
    }

    fn u_prime(&self, p: usize, depth: usize, s: f64, x: f64, horizon: f64) -> Result<f64> {
        let mut obs = Killed {
            alpha: self.alpha,
            f: self.f,
            kernel: self.kernel,
            s,
            hazard: 0.0,
            acc: 0.0,
        };
        let mut rng = self.streams(p, Piece::UPrime, depth);
        self.run(&JumpKernel::zero(), s, x, horizon, &mut rng, &mut obs)?;
        Ok(obs.acc)
    }

    /// `e^{-alpha zeta} U^K f(Y)` at the first jump `(zeta, Y)`, or 0.
    fn nested(&self, p: usize, depth: usize, s: f64, x: f64, horizon: f64) -> Result<f64> {
        let mut obs = FirstJump { hit: None };
        let mut rng = self.streams(p, Piece::Nested, depth);
        let (n, last) = step_plan(horizon, self.mc.dt);
        let end = run_path(self.coeffs, self.kernel, s, x, n, self.mc.dt, last, &mut rng, &mut obs)?;
        match (end, obs.hit) {
            (PathEnd::Stopped, Some((zeta, y))) => {
                Ok((-self.alpha * zeta).exp() * self.full(p, depth + 1, s + zeta, y, horizon - zeta)?)
            }
            _ => Ok(0.0),
        }
    }

    fn full(&self, p: usize, depth: usize, s: f64, x: f64, horizon: f64) -> Result<f64> {
        if horizon <= 0.0 {
            return Ok(0.0);
        }
        if depth >= RESOLVENT_DEPTH {
            return self.direct(p, depth, s, x, horizon);
        }
        Ok(self.u_prime(p, depth, s, x, horizon)? + self.nested(p, depth, s, x, horizon)?)
    }
}

/// Checks `U^K f = U' f + U' K U^K f` at `(s, x)` with all time integrals
/// truncated at `t_max`. Distinct terms use independent streams. Pass iff
/// `|direct - rhs| <= 3 combined stderr + truncation budget` (plus `1e-12`).
#[allow(clippy::too_many_arguments)]
pub fn check_resolvent_identity<C: Coefficients<f64> + ?Sized>(
    coeffs: &C,
    kernel: &JumpKernel,
    f: TestFn,
    alpha: f64,
    start: (f64, f64),
    t_max: f64,
    mc: &McConfig,
) -> Result<ResolventReport> {
    mc.validate()?;
    if !(alpha > 0.0) || !(t_max > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "resolvent needs alpha > 0 and t_max > 0, got {alpha}, {t_max}"
        )));
    }
    let (s, x) = start;
    let r = Resolvent {
        coeffs,
        kernel,
        f,
        alpha,
        mc,
    };
    let samples: Vec<[f64; 3]> = (0..mc.n_paths)
        .into_par_iter()
        .map(|p| {
            Ok([
                r.direct(p, 0, s, x, t_max)?,
                r.u_prime(p, 0, s, x, t_max)?,
                r.nested(p, 0, s, x, t_max)?,
            ])
        })
        .collect::<Result<_>>()?;
    let col = |j: usize| samples.iter().map(|v| v[j]).collect::<Vec<_>>();
    let direct = Estimate::from_samples(&col(0));
    let u_prime = Estimate::from_samples(&col(1));
    let nested = Estimate::from_samples(&col(2));
    let sums: Vec<f64> = samples.iter().map(|v| v[1] + v[2]).collect();
    let rhs = Estimate::from_samples(&sums);
    let truncation_budget = f.sup_norm() * (-alpha * t_max).exp() / alpha;
    // Round-off floor for the noiseless case.
    let tolerance = 3.0 * combined_stderr(direct.stderr, rhs.stderr) + truncation_budget + 1e-12;
    Ok(ResolventReport {
        direct,
        u_prime,
        nested,
        rhs,
        truncation_budget,
        tolerance,
        pass: (direct.mean - rhs.mean).abs() <= tolerance,
    })
}

/// Compares KDE marginals of jump paths started from `law` with the
/// perturbed forward equation at each checkpoint (W1 within
/// `3 stderr + 2 dx`).
pub fn verify_jump_fpe_marginals<C: Coefficients<f64> + ?Sized>(
    coeffs: &C,
    kernel: &JumpKernel,
    law: &InitialLaw,
    grid: &SpatialGrid<f64>,
    checkpoints: &[f64],
    scheme: &SchemeConfig<f64>,
    cfg: &SimConfig,
) -> Result<Vec<VerdictRow>> {
    let u0 = law.density(grid)?;
    let traj = solve_perturbed_fpe(&u0, coeffs, kernel, cfg.horizon, scheme)?;
    let init = sample_initial_dim(law, cfg.n_particles, 1, 0.0, cfg.seed, cfg.replicate)?;
    let cfg = cfg.clone().recording_at(checkpoints);
    let paths = simulate_jump_process(coeffs, kernel, &init, &cfg)?;
    let mut rows = check_superposition(&traj, &paths, checkpoints, cfg.bandwidth, cfg.seed)?;
    for r in &mut rows {
        r.check = "jump_marginal".into();
    }
    Ok(rows)
}
