//! Grid-sampled probability densities and density trajectories.

use std::io::{self, Write};

use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::scalar::Real;

/// Tail mass allowed outside the window before a Gaussian is rejected.
pub const MAX_TAIL_MASS: f64 = 1e-6;

/// Density sampled at the cell centers of one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice<T> {
    grid: SpatialGrid<T>,
    values: Vec<T>,
}

impl<T: Real> Slice<T> {
    /// Wraps raw values; length must match the grid.
    pub fn new(grid: SpatialGrid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::GridMismatch);
        }
        Ok(Slice { grid, values })
    }

    pub fn zeros(grid: SpatialGrid<T>) -> Self {
        Slice {
            grid,
            values: vec![T::zero(); grid.n_cells()],
        }
    }

    /// Cellwise function evaluation, no normalization.
    pub fn from_fn(grid: SpatialGrid<T>, f: impl Fn(T) -> T) -> Self {
        let values = (0..grid.n_cells()).map(|i| f(grid.center(i))).collect();
        Slice { grid, values }
    }

    pub fn grid(&self) -> &SpatialGrid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn mass(&self) -> T {
        self.values.iter().copied().sum::<T>() * self.grid.dx()
    }

    /// Scales to unit mass; a zero slice is left untouched.
    pub fn normalize(&mut self) {
        let m = self.mass();
        if m > T::zero() {
            let inv = T::one() / m;
            self.values.iter_mut().for_each(|v| *v = *v * inv);
        }
    }

    pub fn normalized(mut self) -> Self {
        self.normalize();
        self
    }

    /// `sum_i f(x_i) u_i dx`.
    pub fn integrate(&self, f: impl Fn(T) -> T) -> T {
        let dx = self.grid.dx();
        self.values
            .iter()
            .enumerate()
            .map(|(i, &u)| f(self.grid.center(i)) * u)
            .sum::<T>()
            * dx
    }

    pub fn mean(&self) -> T {
        self.integrate(|x| x) / self.mass()
    }

    pub fn variance(&self) -> T {
        let m = self.mean();
        self.integrate(|x| (x - m) * (x - m)) / self.mass()
    }

    /// Piecewise-linear interpolation between cell centers, constant past the
    /// outermost centers.
    pub fn value_at(&self, x: T) -> T {
        let g = &self.grid;
        let pos = (x - g.x_min()) / g.dx() - T::of(0.5);
        let n = g.n_cells();
        if !(pos > T::zero()) {
            return self.values[0];
        }
        let i = pos.floor().to_usize().unwrap_or(n);
        if i + 1 >= n {
            return self.values[n - 1];
        }
        let w = pos - T::of_usize(i);
        self.values[i] * (T::one() - w) + self.values[i + 1] * w
    }

    /// Cumulative distribution at the right edge of every cell.
    pub fn cdf(&self) -> Vec<T> {
        let dx = self.grid.dx();
        let mut acc = T::zero();
        self.values
            .iter()
            .map(|&u| {
                acc = acc + u * dx;
                acc
            })
            .collect()
    }

    /// Cellwise minimum, used by positivity checks.
    pub fn min_value(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn to_f64(&self) -> Slice<f64> {
        Slice {
            grid: self.grid.to_f64(),
            values: self.values.iter().map(|v| v.as_f64()).collect(),
        }
    }

    pub(crate) fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Normal density restricted to the window and renormalized to unit mass.
///
/// Fails with [`Error::WindowTooSmall`] when the analytic mass outside the
/// window exceeds [`MAX_TAIL_MASS`].
pub fn gaussian_density<T: Real>(grid: &SpatialGrid<T>, mean: T, var: T) -> Result<Slice<T>> {
    if !(var > T::zero()) {
        return Err(Error::InvalidParameter(format!("variance must be positive, got {var}")));
    }
    let (m, s) = (mean.as_f64(), var.as_f64().sqrt());
    let tail = 0.5 * erfc((m - grid.x_min().as_f64()) / (s * std::f64::consts::SQRT_2))
        + 0.5 * erfc((grid.x_max().as_f64() - m) / (s * std::f64::consts::SQRT_2));
    if tail > MAX_TAIL_MASS {
        return Err(Error::WindowTooSmall { tail_mass: tail });
    }
    let norm = T::one() / (T::TAU() * var).sqrt();
    let two_var = var + var;
    Ok(Slice::from_fn(*grid, |x| norm * (-(x - mean) * (x - mean) / two_var).exp()).normalized())
}

/// Uniform density on `[a, b]`, cell weights proportional to overlap.
pub fn uniform_density<T: Real>(grid: &SpatialGrid<T>, a: T, b: T) -> Result<Slice<T>> {
    if !(a < b) || a < grid.x_min() || b > grid.x_max() {
        return Err(Error::InvalidParameter(format!(
            "uniform support [{a}, {b}] must be a nonempty subinterval of the window"
        )));
    }
    let values = (0..grid.n_cells())
        .map(|i| {
            let lo = grid.edge(i).max(a);
            let hi = grid.edge(i + 1).min(b);
            (hi - lo).max(T::zero())
        })
        .collect();
    Ok(Slice {
        grid: *grid,
        values,
    }
    .normalized())
}

/// Time-indexed sequence of slices on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTrajectory<T> {
    grid: SpatialGrid<T>,
    times: Vec<T>,
    values: Vec<Vec<T>>,
}

impl<T: Real> DensityTrajectory<T> {
    pub fn new(grid: SpatialGrid<T>, times: Vec<T>, values: Vec<Vec<T>>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::InvalidParameter(
                "trajectory needs one slice per time".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter("times must increase strictly".into()));
        }
        if values.iter().any(|v| v.len() != grid.n_cells()) {
            return Err(Error::GridMismatch);
        }
        Ok(DensityTrajectory {
            grid,
            times,
            values,
        })
    }

    pub fn from_slice(t0: T, slice: Slice<T>) -> Self {
        DensityTrajectory {
            grid: slice.grid,
            times: vec![t0],
            values: vec![slice.values],
        }
    }

    pub(crate) fn push(&mut self, t: T, values: Vec<T>) {
        debug_assert!(self.times.last().is_none_or(|&last| t > last));
        self.times.push(t);
        self.values.push(values);
    }

    pub fn grid(&self) -> &SpatialGrid<T> {
        &self.grid
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_start(&self) -> T {
        self.times[0]
    }

    pub fn t_end(&self) -> T {
        self.times[self.times.len() - 1]
    }

    pub fn values(&self, k: usize) -> &[T] {
        &self.values[k]
    }

    pub fn slice(&self, k: usize) -> Slice<T> {
        Slice {
            grid: self.grid,
            values: self.values[k].clone(),
        }
    }

    pub fn last(&self) -> Slice<T> {
        self.slice(self.len() - 1)
    }

    /// Bracketing slice indices and weight for time `t` (clamped to the range).
    #[inline]
    pub fn locate(&self, t: T) -> (usize, usize, T) {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return (0, 0, T::zero());
        }
        if t >= self.times[n - 1] {
            return (n - 1, n - 1, T::zero());
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        (k, k + 1, w)
    }

    /// Slice at time `t`, linear in time between stored slices.
    pub fn slice_at(&self, t: T) -> Result<Slice<T>> {
        let tol = self.time_tolerance();
        if t < self.t_start() - tol || t > self.t_end() + tol {
            return Err(Error::CheckpointOutsideTrajectory(t.as_f64()));
        }
        let (k0, k1, w) = self.locate(t);
        let values = self.values[k0]
            .iter()
            .zip(&self.values[k1])
            .map(|(&a, &b)| a * (T::one() - w) + b * w)
            .collect();
        Ok(Slice {
            grid: self.grid,
            values,
        })
    }

    /// Density value at `(t, x)`: linear in time, piecewise constant in space.
    #[inline]
    pub fn value_at(&self, t: T, x: T) -> T {
        let (k0, k1, w) = self.locate(t);
        let i = self.grid.cell_of(x);
        self.values[k0][i] * (T::one() - w) + self.values[k1][i] * w
    }

    /// Index of the stored time closest to `t`.
    pub fn nearest_index(&self, t: T) -> usize {
        let (k0, k1, w) = self.locate(t);
        if w > T::of(0.5) {
            k1
        } else {
            k0
        }
    }

    pub(crate) fn time_tolerance(&self) -> T {
        let span = (self.t_end() - self.t_start()).abs().max(T::one());
        span * T::of(1e-9)
    }

    /// Largest `|mass - 1|` over all slices.
    pub fn max_mass_error(&self) -> T {
        let dx = self.grid.dx();
        self.values
            .iter()
            .map(|v| (v.iter().copied().sum::<T>() * dx - T::one()).abs())
            .fold(T::zero(), T::max)
    }

    pub fn min_value(&self) -> T {
        self.values
            .iter()
            .flat_map(|v| v.iter().copied())
            .fold(T::infinity(), T::min)
    }

    /// Long-format CSV `t,x,u` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,x,u")?;
        for (k, &t) in self.times.iter().enumerate() {
            for (i, &u) in self.values[k].iter().enumerate() {
                writeln!(
                    w,
                    "{:.16e},{:.16e},{:.16e}",
                    t.as_f64(),
                    self.grid.center(i).as_f64(),
                    u.as_f64()
                )?;
            }
        }
        Ok(())
    }

    /// Keeps every `stride`-th slice plus the final one.
    pub fn thinned(&self, stride: usize) -> Self {
        let stride = stride.max(1);
        let n = self.len();
        let keep: Vec<usize> = (0..n)
            .filter(|&k| k % stride == 0 || k + 1 == n)
            .collect();
        DensityTrajectory {
            grid: self.grid,
            times: keep.iter().map(|&k| self.times[k]).collect(),
            values: keep.iter().map(|&k| self.values[k].clone()).collect(),
        }
    }
}
