use crate::error::{Error, Result};
use crate::scalar::Real;

/// Minimum number of cells accepted by [`make_grid`].
pub const MIN_CELLS: usize = 8;

/// Uniform cell-centered grid on a truncated window `[x_min, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid<T> {
    x_min: T,
    x_max: T,
    n_cells: usize,
    dx: T,
}

/// Builds a uniform grid with `n_cells` cells of width `(x_max - x_min) / n_cells`.
pub fn make_grid<T: Real>(x_min: T, x_max: T, n_cells: usize) -> Result<SpatialGrid<T>> {
    if !(x_min.is_finite() && x_max.is_finite()) || !(x_min < x_max) {
        return Err(Error::InvalidGrid(format!(
            "need x_min < x_max, got [{x_min}, {x_max}]"
        )));
    }
    if n_cells < MIN_CELLS {
        return Err(Error::InvalidGrid(format!(
            "need at least {MIN_CELLS} cells, got {n_cells}"
        )));
    }
    let dx = (x_max - x_min) / T::of_usize(n_cells);
    if !(dx > T::zero()) {
        return Err(Error::InvalidGrid("cell width underflows".into()));
    }
    Ok(SpatialGrid {
        x_min,
        x_max,
        n_cells,
        dx,
    })
}

impl<T: Real> SpatialGrid<T> {
    pub fn x_min(&self) -> T {
        self.x_min
    }

    pub fn x_max(&self) -> T {
        self.x_max
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn dx(&self) -> T {
        self.dx
    }

    pub fn len(&self) -> usize {
        self.n_cells
    }

    pub fn is_empty(&self) -> bool {
        self.n_cells == 0
    }

    /// Center of cell `i`.
    #[inline]
    pub fn center(&self, i: usize) -> T {
        self.x_min + (T::of_usize(i) + T::of(0.5)) * self.dx
    }

    /// Left edge of cell `i` (`i == n_cells` gives `x_max`).
    #[inline]
    pub fn edge(&self, i: usize) -> T {
        self.x_min + T::of_usize(i) * self.dx
    }

    pub fn centers(&self) -> Vec<T> {
        (0..self.n_cells).map(|i| self.center(i)).collect()
    }

    pub fn contains(&self, x: T) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    /// Cell containing `x`, clamped to the window.
    #[inline]
    pub fn cell_of(&self, x: T) -> usize {
        let pos = ((x - self.x_min) / self.dx).floor();
        if !(pos > T::zero()) {
            0
        } else {
            pos.to_usize().unwrap_or(usize::MAX).min(self.n_cells - 1)
        }
    }

    /// Grid with every cell split into `factor` subcells.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        make_grid(self.x_min, self.x_max, self.n_cells * factor)
    }

    /// True when both grids describe the same cells up to rounding.
    pub fn same_as(&self, other: &Self) -> bool {
        let tol = self.dx * T::of(1e-9);
        self.n_cells == other.n_cells
            && (self.x_min - other.x_min).abs() <= tol
            && (self.x_max - other.x_max).abs() <= tol
    }

    /// Converts the grid to `f64`.
    pub fn to_f64(&self) -> SpatialGrid<f64> {
        SpatialGrid {
            x_min: self.x_min.as_f64(),
            x_max: self.x_max.as_f64(),
            n_cells: self.n_cells,
            dx: self.dx.as_f64(),
        }
    }
}
