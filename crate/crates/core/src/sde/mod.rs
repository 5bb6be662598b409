//! Euler-Maruyama particle engine: plain diffusions, diffusions with
//! coefficients frozen along a PDE density, and the self-consistent
//! McKean-Vlasov particle system with the density estimated in the loop.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::coeffs::{Coefficients, PorousMedia};
use crate::density::{gaussian_density, uniform_density, DensityTrajectory, Slice};
use crate::ensemble::{ParticleEnsemble, PathBundle};
use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::kde::{kde_binned, silverman_bandwidth};
use crate::rng::{normal, uniform, Purpose, RngStream};

/// Below this particle count the self-consistent density estimate is noise.
pub const MIN_SELF_CONSISTENT_PARTICLES: usize = 1000;
pub const DEFAULT_KDE_REFRESH: usize = 5;

/// What happens at the window edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Particles fly freely; leaving the window is only counted.
    Free,
    /// Mirror reflection at the window edges.
    Reflect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_particles: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    /// Replicate index of the random streams.
    pub replicate: u64,
    pub boundary: Boundary,
    /// Window for reflection and escape counting.
    pub window: Option<SpatialGrid<f64>>,
    /// Store every `record_every`-th step; must divide the step count.
    pub record_every: usize,
    pub kde_refresh_every: usize,
    /// `0` selects Silverman's rule.
    pub bandwidth: f64,
}

impl SimConfig {
    pub fn new(n_particles: usize, dt: f64, horizon: f64, seed: u64) -> Self {
        SimConfig {
            n_particles,
            dt,
            horizon,
            seed,
            replicate: 0,
            boundary: Boundary::Free,
            window: None,
            record_every: 1,
            kde_refresh_every: DEFAULT_KDE_REFRESH,
            bandwidth: 0.0,
        }
    }

    pub fn replicate(mut self, r: u64) -> Self {
        self.replicate = r;
        self
    }

    pub fn within(mut self, grid: SpatialGrid<f64>) -> Self {
        self.window = Some(grid);
        self
    }

    pub fn reflecting(mut self, grid: SpatialGrid<f64>) -> Self {
        self.window = Some(grid);
        self.boundary = Boundary::Reflect;
        self
    }

    pub fn recording_every(mut self, k: usize) -> Self {
        self.record_every = k;
        self
    }

    /// Records only the steps needed to read off the given elapsed times.
    pub fn recording_at(mut self, times: &[f64]) -> Self {
        let mut g = 0usize;
        for &t in times.iter().chain([self.horizon].iter()) {
            let k = (t / self.dt).round() as usize;
            g = gcd(g, k);
        }
        self.record_every = g.max(1);
        self
    }

    pub fn refreshing_every(mut self, k: usize) -> Self {
        self.kde_refresh_every = k;
        self
    }

    pub fn bandwidth(mut self, h: f64) -> Self {
        self.bandwidth = h;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    /// Number of Euler steps covering the horizon.
    pub fn steps(&self) -> Result<usize> {
        if self.n_particles == 0 {
            return Err(Error::EmptyEnsemble);
        }
        if !(self.dt > 0.0) || !(self.horizon >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need dt > 0 and T >= 0, got dt = {}, T = {}",
                self.dt, self.horizon
            )));
        }
        if self.kde_refresh_every == 0 || self.record_every == 0 {
            return Err(Error::InvalidParameter("refresh and record strides must be >= 1".into()));
        }
        let n = (self.horizon / self.dt).round();
        if (n * self.dt - self.horizon).abs() > 1e-9 * self.horizon.max(self.dt) {
            return Err(Error::InvalidParameter(format!(
                "T = {} is not a multiple of dt = {}",
                self.horizon, self.dt
            )));
        }
        let n = n as usize;
        if !n.is_multiple_of(self.record_every) {
            return Err(Error::InvalidParameter(format!(
                "record stride {} does not divide {n} steps",
                self.record_every
            )));
        }
        Ok(n)
    }
}

/// Settings shared by the path-functional estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub replicate: u64,
}

impl McConfig {
    pub fn new(n_paths: usize, dt: f64, seed: u64) -> Self {
        McConfig {
            n_paths,
            dt,
            seed,
            replicate: 0,
        }
    }

    pub fn replicate(mut self, r: u64) -> Self {
        self.replicate = r;
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::EmptyEnsemble);
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }

    /// Stream of path `p` for the given purpose.
    pub fn stream(&self, p: usize, purpose: Purpose) -> ChaCha8Rng {
        RngStream::particle(self.seed, p, self.replicate, purpose).rng()
    }
}

/// Step lengths covering `[0, horizon]`: full steps of `dt` and a shorter
/// final step when `horizon` is not a multiple of `dt`.
pub(crate) fn step_plan(horizon: f64, dt: f64) -> (usize, f64) {
    let ratio = horizon / dt;
    let n = (ratio - 1e-9).ceil().max(0.0) as usize;
    let last = if n == 0 { 0.0 } else { horizon - (n - 1) as f64 * dt };
    (n, last)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Initial laws of the scenario format.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    Gaussian { mean: f64, var: f64 },
    Uniform { a: f64, b: f64 },
    /// A density given on a grid; sampled by inverse CDF.
    GridDensity(Slice<f64>),
}

impl InitialLaw {
    /// One draw using `rng`; `cdf` is the cumulative sum of a grid density.
    pub(crate) fn sample_with(&self, cdf: &[f64], rng: &mut ChaCha8Rng) -> f64 {
        self.draw(cdf, rng)
    }

    pub(crate) fn cdf(&self) -> Vec<f64> {
        match self {
            InitialLaw::GridDensity(s) => s.cdf(),
            _ => Vec::new(),
        }
    }

    /// The law as a unit-mass slice on `grid`.
    pub fn density(&self, grid: &SpatialGrid<f64>) -> Result<Slice<f64>> {
        match self {
            InitialLaw::Gaussian { mean, var } => gaussian_density(grid, *mean, *var),
            InitialLaw::Uniform { a, b } => uniform_density(grid, *a, *b),
            InitialLaw::GridDensity(s) => {
                if s.grid().same_as(grid) {
                    Ok(s.clone())
                } else {
                    Err(Error::GridMismatch)
                }
            }
        }
    }

    fn draw(&self, cdf: &[f64], rng: &mut ChaCha8Rng) -> f64 {
        match self {
            InitialLaw::Gaussian { mean, var } => mean + var.sqrt() * normal(rng),
            InitialLaw::Uniform { a, b } => a + (b - a) * uniform(rng),
            InitialLaw::GridDensity(s) => {
                let g = s.grid();
                let total = cdf[cdf.len() - 1];
                let target = uniform(rng) * total;
                let i = cdf.partition_point(|&c| c <= target).min(cdf.len() - 1);
                let below = if i == 0 { 0.0 } else { cdf[i - 1] };
                let width = cdf[i] - below;
                let frac = if width > 0.0 { (target - below) / width } else { 0.5 };
                g.edge(i) + frac * g.dx()
            }
        }
    }
}

/// `N` i.i.d. draws in `dim` dimensions (coordinates independent), one
/// stream per particle.
pub fn sample_initial_dim(
    law: &InitialLaw,
    n: usize,
    dim: usize,
    start_clock: f64,
    seed: u64,
    replicate: u64,
) -> Result<ParticleEnsemble<f64>> {
    if n == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let cdf = match law {
        InitialLaw::GridDensity(s) => s.cdf(),
        _ => Vec::new(),
    };
    let mut pos = vec![0.0; n * dim];
    pos.par_chunks_mut(dim).enumerate().for_each(|(i, p)| {
        let mut rng = RngStream::particle(seed, i, replicate, Purpose::Initial).rng();
        for c in p {
            *c = law.draw(&cdf, &mut rng);
        }
    });
    ParticleEnsemble::with_dim(start_clock, dim, pos)
}

pub fn sample_initial(law: &InitialLaw, n: usize, seed: u64, replicate: u64) -> Result<ParticleEnsemble<f64>> {
    sample_initial_dim(law, n, 1, 0.0, seed, replicate)
}

/// One generator per particle for the given purpose.
pub fn particle_streams(seed: u64, replicate: u64, n: usize, purpose: Purpose) -> Vec<ChaCha8Rng> {
    (0..n)
        .map(|i| RngStream::particle(seed, i, replicate, purpose).rng())
        .collect()
}

/// `x + b dt + sqrt(a dt) xi` at clock `t`.
#[inline]
pub fn em_update<C: Coefficients<f64> + ?Sized>(coeffs: &C, t: f64, x: f64, dt: f64, xi: f64) -> Result<f64> {
    let a = coeffs.diffusion(t, x);
    if !(a >= 0.0) {
        return Err(Error::NegativeDiffusion { t, x, a });
    }
    Ok(x + coeffs.drift(t, x) * dt + (a * dt).sqrt() * xi)
}

#[inline]
pub(crate) fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    let mut x = x;
    while x < lo || x > hi {
        if x < lo {
            x = 2.0 * lo - x;
        }
        if x > hi {
            x = 2.0 * hi - x;
        }
    }
    x
}

/// Advances every particle by one Euler step of length `dt`; `rngs[i]`
/// drives particle `i`. In two dimensions each coordinate sees the
/// one-dimensional coefficients (diagonal `a`).
pub fn em_step<C: Coefficients<f64> + ?Sized>(
    ens: &mut ParticleEnsemble<f64>,
    coeffs: &C,
    dt: f64,
    rngs: &mut [ChaCha8Rng],
) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let t = ens.clock();
    let dim = ens.dim();
    ens.positions_mut()
        .par_chunks_mut(dim)
        .zip(rngs.par_iter_mut())
        .try_for_each(|(p, rng)| {
            for c in p {
                *c = em_update(coeffs, t, *c, dt, normal(rng))?;
            }
            Ok(())
        })?;
    ens.advance_clock(dt);
    Ok(())
}

/// Simulates every particle of `init` over `cfg.horizon`, recording every
/// `cfg.record_every`-th step. Particle `i` uses the diffusion stream
/// `(seed, i, replicate)`, so the result matches repeated [`em_step`] calls.
pub fn simulate_paths<C: Coefficients<f64> + ?Sized>(
    coeffs: &C,
    init: &ParticleEnsemble<f64>,
    cfg: &SimConfig,
) -> Result<PathBundle<f64>> {
    let n_steps = cfg.steps()?;
    let dim = init.dim();
    let n = init.len();
    let rec = cfg.record_every;
    let slots = n_steps / rec + 1;
    let s = init.start_clock();
    let mut states = vec![0.0; n * slots * dim];
    let mut escaped = vec![false; n];
    states
        .par_chunks_mut(slots * dim)
        .zip(escaped.par_iter_mut())
        .enumerate()
        .try_for_each(|(p, (row, esc))| -> Result<()> {
            let mut rng = RngStream::particle(cfg.seed, p, cfg.replicate, Purpose::Diffusion).rng();
            let mut x = [0.0; 2];
            x[..dim].copy_from_slice(&init.positions()[p * dim..(p + 1) * dim]);
            row[..dim].copy_from_slice(&x[..dim]);
            for k in 0..n_steps {
                let t = s + k as f64 * cfg.dt;
                for c in x.iter_mut().take(dim) {
                    let mut y = em_update(coeffs, t, *c, cfg.dt, normal(&mut rng))?;
                    if let Some(w) = &cfg.window {
                        match cfg.boundary {
                            Boundary::Reflect => y = reflect(y, w.x_min(), w.x_max()),
                            Boundary::Free => *esc |= !w.contains(y),
                        }
                    }
                    *c = y;
                }
                if (k + 1) % rec == 0 {
                    let slot = (k + 1) / rec;
                    row[slot * dim..(slot + 1) * dim].copy_from_slice(&x[..dim]);
                }
            }
            Ok(())
        })?;
    let escaped = escaped.iter().filter(|&&e| e).count();
    Ok(PathBundle::new(s, cfg.dt * rec as f64, n_steps / rec, dim, n, states)?.with_escaped(escaped))
}

/// Paths of the diffusion with coefficients `coeffs` (typically frozen along
/// `u_traj`), started from i.i.d. draws of the first slice of `u_traj` at its
/// first time.
pub fn simulate_linearized<C: Coefficients<f64> + ?Sized>(
    u_traj: &DensityTrajectory<f64>,
    coeffs: &C,
    cfg: &SimConfig,
) -> Result<PathBundle<f64>> {
    let required = u_traj.t_start() + cfg.horizon;
    if required > u_traj.t_end() + 1e-9 * required.abs().max(1.0) {
        return Err(Error::TrajectoryTooShort {
            required,
            available: u_traj.t_end(),
        });
    }
    let law = InitialLaw::GridDensity(u_traj.slice(0));
    let init = sample_initial_dim(&law, cfg.n_particles, 1, u_traj.t_start(), cfg.seed, cfg.replicate)?;
    simulate_paths(coeffs, &init, cfg)
}

/// Output of [`simulate_self_consistent`].
#[derive(Debug, Clone)]
pub struct SelfConsistentRun {
    pub paths: PathBundle<f64>,
    /// Density estimates at every refresh and at the horizon.
    pub density: DensityTrajectory<f64>,
    pub bandwidths: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Particle approximation of the Nemytskii McKean-Vlasov SDE: the density
/// inside `a = 2 beta(u)/u` and `b = D b(u)` is a binned KDE of the particles
/// themselves, refreshed every `cfg.kde_refresh_every` steps and read
/// piecewise constant in space.
pub fn simulate_self_consistent(
    porous: &PorousMedia,
    init: &InitialLaw,
    grid: &SpatialGrid<f64>,
    cfg: &SimConfig,
) -> Result<SelfConsistentRun> {
    let n_steps = cfg.steps()?;
    let n = cfg.n_particles;
    let mut warnings = Vec::new();
    if n < MIN_SELF_CONSISTENT_PARTICLES {
        warnings.push(format!(
            "N = {n} is below {MIN_SELF_CONSISTENT_PARTICLES}; the density estimate inside the coefficients is unreliable"
        ));
    }
    let mut ens = sample_initial(init, n, cfg.seed, cfg.replicate)?;
    let mut rngs = particle_streams(cfg.seed, cfg.replicate, n, Purpose::Diffusion);
    let rec = cfg.record_every;
    let slots = n_steps / rec + 1;
    let mut states = vec![0.0; n * slots];
    let mut escaped = vec![false; n];
    let record = |states: &mut [f64], ens: &ParticleEnsemble<f64>, slot: usize| {
        for (p, &x) in ens.positions().iter().enumerate() {
            states[p * slots + slot] = x;
        }
    };
    record(&mut states, &ens, 0);

    let estimate = |ens: &ParticleEnsemble<f64>| -> Result<(Slice<f64>, f64)> {
        let h = if cfg.bandwidth > 0.0 {
            cfg.bandwidth
        } else {
            let h = silverman_bandwidth(ens);
            if h > 0.0 {
                h
            } else {
                grid.dx()
            }
        };
        Ok((kde_binned(ens.positions(), None, h, grid)?, h))
    };
    let (mut u, h0) = estimate(&ens)?;
    let mut density = DensityTrajectory::from_slice(0.0, u.clone());
    let mut bandwidths = vec![h0];

    let mut a_cell = vec![0.0; grid.n_cells()];
    let mut b_cell = vec![0.0; grid.n_cells()];
    for k in 0..n_steps {
        if k > 0 && k % cfg.kde_refresh_every == 0 {
            let (fresh, h) = estimate(&ens)?;
            u = fresh;
            density.push(ens.elapsed(), u.values().to_vec());
            bandwidths.push(h);
        }
        for (i, &ui) in u.values().iter().enumerate() {
            let x = grid.center(i);
            a_cell[i] = porous.diffusion_at(x, ui);
            b_cell[i] = porous.drift_at(x, ui);
        }
        let dt = cfg.dt;
        ens.positions_mut()
            .par_iter_mut()
            .zip(rngs.par_iter_mut())
            .zip(escaped.par_iter_mut())
            .for_each(|((x, rng), esc)| {
                let i = grid.cell_of(*x);
                let mut y = *x + b_cell[i] * dt + (a_cell[i] * dt).sqrt() * normal(rng);
                match cfg.boundary {
                    Boundary::Reflect => y = reflect(y, grid.x_min(), grid.x_max()),
                    Boundary::Free => *esc |= !grid.contains(y),
                }
                *x = y;
            });
        ens.advance_clock(dt);
        if (k + 1) % rec == 0 {
            record(&mut states, &ens, (k + 1) / rec);
        }
    }
    let (last, h) = estimate(&ens)?;
    density.push(ens.elapsed(), last.values().to_vec());
    bandwidths.push(h);
    let escaped = escaped.iter().filter(|&&e| e).count();
    let paths = PathBundle::new(0.0, cfg.dt * rec as f64, n_steps / rec, 1, n, states)?.with_escaped(escaped);
    Ok(SelfConsistentRun {
        paths,
        density,
        bandwidths,
        warnings,
    })
}

#[cfg(test)]
mod tests;
