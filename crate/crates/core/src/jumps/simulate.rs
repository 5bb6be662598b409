use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::coeffs::Coefficients;
use crate::ensemble::{JumpEvent, ParticleEnsemble, PathBundle};
use crate::error::{Error, Result};
use crate::rng::{exponential, normal, uniform, Purpose, RngStream};
use crate::sde::{em_update, reflect, Boundary, SimConfig};

use super::JumpKernel;

/// The three independent streams of one jump path.
pub(crate) struct PathStreams {
    diffusion: ChaCha8Rng,
    clock: ChaCha8Rng,
    marks: ChaCha8Rng,
}

impl PathStreams {
    pub(crate) fn new(seed: u64, path: usize, replicate: u64) -> Self {
        let s = RngStream::particle(seed, path, replicate, Purpose::Diffusion);
        PathStreams {
            diffusion: s.rng(),
            clock: s.with_purpose(Purpose::Jump).rng(),
            marks: s.with_purpose(Purpose::Displacement).rng(),
        }
    }
}

/// Callbacks of [`run_path`]; elapsed times are measured from the start.
pub(crate) trait PathObserver {
    /// The state is `x` on `[t0, t1)`.
    fn segment(&mut self, _t0: f64, _t1: f64, _x: f64) {}
    /// Accepted jump at elapsed `t`; return false to stop the path.
    fn jump(&mut self, _t: f64, _pre: f64, _post: f64) -> bool {
        true
    }
    /// State after full step `k` (before any boundary handling).
    fn step(&mut self, _k: usize, _x: f64) -> f64 {
        _x
    }
}

pub(crate) enum PathEnd {
    Completed,
    Stopped,
}

/// Euler-Maruyama with jumps by thinning: candidate ticks at rate `lambda`
/// split the steps they fall in, and a tick at state `x` is accepted with
/// probability `c(t, x) / lambda`. A step with no tick is the plain Euler
/// step, so the zero kernel reproduces the jump-free paths bit for bit.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_path<C: Coefficients<f64> + ?Sized, O: PathObserver>(
    coeffs: &C,
    kernel: &JumpKernel,
    s: f64,
    x0: f64,
    n_steps: usize,
    dt: f64,
    last: f64,
    rng: &mut PathStreams,
    obs: &mut O,
) -> Result<PathEnd> {
    let lambda = kernel.bound();
    let tick = |rng: &mut ChaCha8Rng| {
        if lambda > 0.0 {
            exponential(rng) / lambda
        } else {
            f64::INFINITY
        }
    };
    let mut next = tick(&mut rng.clock);
    let mut x = x0;
    for k in 0..n_steps {
        let h = if k + 1 == n_steps { last } else { dt };
        let t0 = k as f64 * dt;
        let t1 = t0 + h;
        let mut tc = t0;
        while next < t1 {
            obs.segment(tc, next, x);
            x = em_update(coeffs, s + tc, x, next - tc, normal(&mut rng.diffusion))?;
            tc = next;
            let c = kernel.rate(s + tc, x);
            if c > lambda * (1.0 + 1e-12) {
                return Err(Error::DominationViolated {
                    rate: c,
                    bound: lambda,
                    t: s + tc,
                    x,
                });
            }
            if uniform(&mut rng.clock) * lambda < c {
                let post = x + kernel.displacement.sample(&mut rng.marks);
                if !obs.jump(tc, x, post) {
                    return Ok(PathEnd::Stopped);
                }
                x = post;
            }
            next = tc + tick(&mut rng.clock);
        }
        obs.segment(tc, t1, x);
        let rest = if tc == t0 { h } else { t1 - tc };
        x = em_update(coeffs, s + tc, x, rest, normal(&mut rng.diffusion))?;
        x = obs.step(k, x);
    }
    Ok(PathEnd::Completed)
}

/// Checks `c <= lambda` at the window centers.
fn check_domination_on_window(kernel: &JumpKernel, cfg: &SimConfig, s: f64) -> Result<()> {
    let Some(w) = &cfg.window else { return Ok(()) };
    for x in w.centers() {
        let c = kernel.rate(s, x);
        if c > kernel.bound() * (1.0 + 1e-12) {
            return Err(Error::DominationViolated {
                rate: c,
                bound: kernel.bound(),
                t: s,
                x,
            });
        }
    }
    Ok(())
}

struct Recorder<'a> {
    path: usize,
    s: f64,
    row: &'a mut [f64],
    rec: usize,
    events: Vec<JumpEvent>,
    window: Option<(f64, f64, Boundary)>,
    escaped: bool,
}

impl PathObserver for Recorder<'_> {
    fn jump(&mut self, t: f64, pre: f64, post: f64) -> bool {
        self.events.push(JumpEvent {
            path: self.path,
            t: self.s + t,
            x_pre: pre,
            x_post: post,
        });
        true
    }

    fn step(&mut self, k: usize, mut x: f64) -> f64 {
        if let Some((lo, hi, b)) = self.window {
            match b {
                Boundary::Reflect => x = reflect(x, lo, hi),
                Boundary::Free => self.escaped |= !(lo..=hi).contains(&x),
            }
        }
        if (k + 1).is_multiple_of(self.rec) {
            self.row[(k + 1) / self.rec] = x;
        }
        x
    }
}

/// Paths of the kernel-perturbed diffusion in one dimension, with every
/// accepted jump recorded. Candidate ticks that are rejected leave no trace.
pub fn simulate_jump_process<C: Coefficients<f64> + ?Sized>(
    coeffs: &C,
    kernel: &JumpKernel,
    init: &ParticleEnsemble<f64>,
    cfg: &SimConfig,
) -> Result<PathBundle<f64>> {
    if init.dim() != 1 {
        return Err(Error::InvalidParameter("jump simulation is one-dimensional".into()));
    }
    let n_steps = cfg.steps()?;
    let s = init.start_clock();
    check_domination_on_window(kernel, cfg, s)?;
    let n = init.len();
    let rec = cfg.record_every;
    let slots = n_steps / rec + 1;
    let window = cfg.window.map(|w| (w.x_min(), w.x_max(), cfg.boundary));
    let mut states = vec![0.0; n * slots];
    let per_path: Vec<(Vec<JumpEvent>, bool)> = states
        .par_chunks_mut(slots)
        .enumerate()
        .map(|(p, row)| -> Result<_> {
            let x0 = init.positions()[p];
            row[0] = x0;
            let mut streams = PathStreams::new(cfg.seed, p, cfg.replicate);
            let mut obs = Recorder {
                path: p,
                s,
                row,
                rec,
                events: Vec::new(),
                window,
                escaped: false,
            };
            run_path(coeffs, kernel, s, x0, n_steps, cfg.dt, cfg.dt, &mut streams, &mut obs)?;
            Ok((obs.events, obs.escaped))
        })
        .collect::<Result<_>>()?;
    let escaped = per_path.iter().filter(|(_, e)| *e).count();
    let events = per_path.into_iter().flat_map(|(e, _)| e).collect();
    Ok(PathBundle::new(s, cfg.dt * rec as f64, n_steps / rec, 1, n, states)?
        .with_events(events)
        .with_escaped(escaped))
}

/// Number of recorded jumps of each path.
pub fn events_per_path(paths: &PathBundle<f64>) -> Vec<usize> {
    let mut counts = vec![0; paths.n_paths()];
    for e in paths.events() {
        counts[e.path] += 1;
    }
    counts
}
