//! Particle ensembles and recorded path bundles.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// `N` particles in `d` dimensions sharing one start clock `s`.
///
/// The space-time clock of every particle is `s + t` where `t` is the elapsed
/// time; it is derived from the step count, never integrated.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble<T> {
    start_clock: T,
    dim: usize,
    positions: Vec<T>,
    weights: Vec<T>,
    elapsed_base: T,
    steps: u64,
    step_dt: T,
}

impl<T: Real> ParticleEnsemble<T> {
    /// Equally weighted ensemble of one-dimensional particles.
    pub fn new(start_clock: T, positions: Vec<T>) -> Result<Self> {
        Self::with_dim(start_clock, 1, positions)
    }

    /// Equally weighted ensemble; `positions` is row-major `N x dim`.
    pub fn with_dim(start_clock: T, dim: usize, positions: Vec<T>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        if !(1..=2).contains(&dim) || !positions.len().is_multiple_of(dim) {
            return Err(Error::InvalidParameter(format!(
                "dimension {dim} does not fit {} coordinates",
                positions.len()
            )));
        }
        if !(start_clock >= T::zero()) {
            return Err(Error::InvalidParameter("start clock must be >= 0".into()));
        }
        let n = positions.len() / dim;
        let w = T::one() / T::of_usize(n);
        Ok(ParticleEnsemble {
            start_clock,
            dim,
            positions,
            weights: vec![w; n],
            elapsed_base: T::zero(),
            steps: 0,
            step_dt: T::zero(),
        })
    }

    /// Replaces the weights; they must be positive and sum to one within 1e-12.
    pub fn with_weights(mut self, weights: Vec<T>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::InvalidParameter("one weight per particle".into()));
        }
        if weights.iter().any(|&w| !(w > T::zero())) {
            return Err(Error::InvalidParameter("weights must be positive".into()));
        }
        let total: T = weights.iter().copied().sum();
        if (total - T::one()).abs().as_f64() > 1e-12 {
            return Err(Error::InvalidParameter(format!("weights sum to {total}")));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn start_clock(&self) -> T {
        self.start_clock
    }

    pub fn positions(&self) -> &[T] {
        &self.positions
    }

    pub fn positions_mut(&mut self) -> &mut [T] {
        &mut self.positions
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// First coordinate of particle `i`.
    pub fn x(&self, i: usize) -> T {
        self.positions[i * self.dim]
    }

    /// First coordinates of all particles.
    pub fn first_coordinates(&self) -> Vec<T> {
        self.positions.iter().step_by(self.dim).copied().collect()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Elapsed time `t`.
    pub fn elapsed(&self) -> T {
        self.elapsed_base + T::from_u64(self.steps).expect("step count fits") * self.step_dt
    }

    /// Clock component `s + t` shared by every particle.
    pub fn clock(&self) -> T {
        self.start_clock + self.elapsed()
    }

    /// Registers one step of length `dt` on the clock.
    pub(crate) fn advance_clock(&mut self, dt: T) {
        if self.steps > 0 && dt != self.step_dt {
            self.elapsed_base = self.elapsed();
            self.steps = 0;
        }
        self.step_dt = dt;
        self.steps += 1;
    }

    /// Weighted mean of the first coordinate.
    pub fn mean(&self) -> T {
        self.positions
            .iter()
            .step_by(self.dim)
            .zip(&self.weights)
            .map(|(&x, &w)| x * w)
            .sum()
    }

    /// Weighted variance of the first coordinate.
    pub fn variance(&self) -> T {
        let m = self.mean();
        self.positions
            .iter()
            .step_by(self.dim)
            .zip(&self.weights)
            .map(|(&x, &w)| (x - m) * (x - m) * w)
            .sum()
    }
}

/// Per-path jump record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub path: usize,
    /// Clock time of the jump.
    pub t: f64,
    pub x_pre: f64,
    pub x_post: f64,
}

/// `N` recorded paths on the step grid `s + k dt`, `k = 0..=M`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle<T> {
    start_clock: T,
    dt: T,
    steps: usize,
    dim: usize,
    n_paths: usize,
    /// `states[(p * (steps + 1) + k) * dim + c]`.
    states: Vec<T>,
    events: Vec<JumpEvent>,
    escaped: usize,
}

impl<T: Real> PathBundle<T> {
    pub fn new(
        start_clock: T,
        dt: T,
        steps: usize,
        dim: usize,
        n_paths: usize,
        states: Vec<T>,
    ) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(Error::InvalidParameter("dt must be positive".into()));
        }
        if states.len() != n_paths * (steps + 1) * dim {
            return Err(Error::InvalidParameter("path state array has wrong shape".into()));
        }
        Ok(PathBundle {
            start_clock,
            dt,
            steps,
            dim,
            n_paths,
            states,
            events: Vec::new(),
            escaped: 0,
        })
    }

    pub(crate) fn with_events(mut self, mut events: Vec<JumpEvent>) -> Self {
        events.sort_by(|a, b| a.path.cmp(&b.path).then(a.t.total_cmp(&b.t)));
        self.events = events;
        self
    }

    pub(crate) fn with_escaped(mut self, escaped: usize) -> Self {
        self.escaped = escaped;
        self
    }

    pub fn start_clock(&self) -> T {
        self.start_clock
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn events(&self) -> &[JumpEvent] {
        &self.events
    }

    /// Paths that left the window at some recorded step.
    pub fn escaped(&self) -> usize {
        self.escaped
    }

    /// Clock time of step `k`.
    pub fn clock_at(&self, k: usize) -> T {
        self.start_clock + T::of_usize(k) * self.dt
    }

    /// Coordinate `c` of path `p` at step `k`.
    #[inline]
    pub fn state(&self, p: usize, k: usize, c: usize) -> T {
        self.states[(p * (self.steps + 1) + k) * self.dim + c]
    }

    /// Step index nearest to elapsed time `t`.
    pub fn step_of(&self, t: T) -> Option<usize> {
        let k = (t / self.dt).round().to_usize()?;
        let on_grid = (T::of_usize(k) * self.dt - t).abs() <= self.dt * T::of(1e-6);
        (k <= self.steps && on_grid).then_some(k)
    }

    /// Ensemble of first coordinates at step `k`.
    pub fn marginal(&self, k: usize) -> ParticleEnsemble<T> {
        let xs = (0..self.n_paths).map(|p| self.state(p, k, 0)).collect();
        let mut ens = ParticleEnsemble::new(self.start_clock, xs).expect("bundle has paths");
        for _ in 0..k {
            ens.advance_clock(self.dt);
        }
        ens
    }

    /// CSV `path_id,step,t,x` (plus `y` in two dimensions), `t` the clock time.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        if self.dim == 2 {
            writeln!(w, "path_id,step,t,x,y")?;
        } else {
            writeln!(w, "path_id,step,t,x")?;
        }
        for p in 0..self.n_paths {
            for k in 0..=self.steps {
                write!(w, "{p},{k},{:.16e},{:.16e}", self.clock_at(k).as_f64(), self.state(p, k, 0).as_f64())?;
                if self.dim == 2 {
                    write!(w, ",{:.16e}", self.state(p, k, 1).as_f64())?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    /// Event log CSV `path_id,t,x_pre,x_post`.
    pub fn write_events_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "path_id,t,x_pre,x_post")?;
        for e in &self.events {
            writeln!(w, "{},{:.16e},{:.16e},{:.16e}", e.path, e.t, e.x_pre, e.x_post)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clock_is_exact_multiple_of_dt() {
        let mut e = ParticleEnsemble::new(0.3, vec![0.0; 4]).unwrap();
        for _ in 0..1000 {
            e.advance_clock(1e-3);
        }
        assert_eq!(e.elapsed(), 1000.0 * 1e-3);
        assert_eq!(e.clock(), 0.3 + 1000.0 * 1e-3);
        e.advance_clock(0.5);
        assert_eq!(e.elapsed(), 1000.0 * 1e-3 + 0.5);
    }

    #[test]
    fn weights_validated() {
        let e = ParticleEnsemble::new(0.0, vec![1.0, 2.0]).unwrap();
        assert!(e.clone().with_weights(vec![0.5, 0.6]).is_err());
        assert!(e.clone().with_weights(vec![1.0, 0.0]).is_err());
        let e = e.with_weights(vec![0.25, 0.75]).unwrap();
        assert_eq!(e.mean(), 1.75);
        assert!(ParticleEnsemble::<f64>::new(0.0, vec![]).is_err());
    }

    #[test]
    fn bundle_shape_and_csv() {
        let b = PathBundle::new(1.0, 0.5, 2, 1, 2, vec![0.0, 0.1, 0.2, 1.0, 1.1, 1.2]).unwrap();
        assert_eq!(b.state(1, 2, 0), 1.2);
        assert_eq!(b.step_of(1.0), Some(2));
        assert_eq!(b.step_of(0.3), None);
        assert_eq!(b.marginal(1).first_coordinates(), vec![0.1, 1.1]);
        assert_eq!(b.marginal(2).clock(), 2.0);
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("path_id,step,t,x\n0,0,1.0000000000000000e0,0.0000000000000000e0\n"));
        assert!(PathBundle::new(0.0, 0.5, 2, 1, 2, vec![0.0; 5]).is_err());
    }
}
