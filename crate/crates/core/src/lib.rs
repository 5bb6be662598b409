//! Numerical laboratory for linear and porous-media Fokker-Planck equations
//! and their probabilistic counterparts.

// `!(x > 0)` style guards are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod coeffs;
pub mod density;
pub mod distance;
pub mod ensemble;
pub mod error;
pub mod fpe;
pub mod grid;
pub mod jumps;
pub mod kde;
pub mod rng;
pub mod sde;
pub mod potential;
pub mod scalar;
pub mod scenario;
pub mod stats;
pub mod verify;

pub use coeffs::{Coefficients, CoefficientModel, PorousMedia};
pub use density::{gaussian_density, uniform_density, DensityTrajectory, Slice};
pub use distance::{l1_distance, wasserstein1};
pub use ensemble::{ParticleEnsemble, PathBundle};
pub use error::{Error, Result};
pub use grid::{make_grid, SpatialGrid};
pub use kde::kde;
pub use scalar::Real;

/// Double-precision aliases used by the estimators and the command line.
pub type Grid = SpatialGrid<f64>;
pub type Density = Slice<f64>;
pub type Trajectory = DensityTrajectory<f64>;
pub type Ensemble = ParticleEnsemble<f64>;
pub type Paths = PathBundle<f64>;
pub type Model = CoefficientModel<f64>;
