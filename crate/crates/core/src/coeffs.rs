//! Drift and diffusion laws `a(t, x)`, `b(t, x)` for the operator
//! `L_t f = 1/2 a f'' + b f'`, and the porous-media triple `(beta, D, b)`.

use std::str::FromStr;

use crate::density::DensityTrajectory;
use crate::error::Error;
use crate::grid::SpatialGrid;
use crate::scalar::Real;

/// Density floor below which the quotient `2 beta(x, u) / u` is replaced by
/// its limit `2 beta_r(x, 0)`.
pub const DENSITY_FLOOR: f64 = 1e-12;

/// Pointwise drift and diffusion evaluation.
pub trait Coefficients<T: Real>: Sync {
    /// Diffusion coefficient `a(t, x) = sigma^2`.
    fn diffusion(&self, t: T, x: T) -> T;
    fn drift(&self, t: T, x: T) -> T;
}

/// Time-dependent laws selectable by id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeLaw {
    /// `a = 1`, `b = sin t`.
    SinDrift,
    /// `a = 1`, `b = -x + sin t`.
    OuSinDrift,
    /// `a = x^2`, `b = 0`; degenerate at the origin.
    XSquared,
}

impl FromStr for TimeLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "sin_drift" => Ok(TimeLaw::SinDrift),
            "ou_sin" => Ok(TimeLaw::OuSinDrift),
            "x_squared" => Ok(TimeLaw::XSquared),
            _ => Err(Error::UnknownCatalogId(s.to_string())),
        }
    }
}

impl TimeLaw {
    pub fn id(&self) -> &'static str {
        match self {
            TimeLaw::SinDrift => "sin_drift",
            TimeLaw::OuSinDrift => "ou_sin",
            TimeLaw::XSquared => "x_squared",
        }
    }
}

/// Linear coefficient models; `Linearized` freezes a porous-media density.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientModel<T> {
    Constant { a: T, b: T },
    /// `a` constant, `b(x) = -theta x`.
    OrnsteinUhlenbeck { a: T, theta: T },
    TimeDependent(TimeLaw),
    Linearized(Box<Linearized<T>>),
}

impl<T: Real> CoefficientModel<T> {
    pub fn heat() -> Self {
        CoefficientModel::Constant {
            a: T::one(),
            b: T::zero(),
        }
    }

    pub fn ou() -> Self {
        CoefficientModel::OrnsteinUhlenbeck {
            a: T::one(),
            theta: T::one(),
        }
    }

    /// Whether the model is meant to be uniformly elliptic (`a >= 1/C > 0`).
    pub fn claims_ellipticity(&self) -> bool {
        !matches!(self, CoefficientModel::TimeDependent(TimeLaw::XSquared))
    }

    /// `(max a, max |b|)` over the cell centers at time `t`.
    pub fn bounds_on_grid(&self, t: T, grid: &SpatialGrid<T>) -> (T, T) {
        grid_bounds(self, t, grid)
    }
}

pub(crate) fn grid_bounds<T: Real, C: Coefficients<T> + ?Sized>(c: &C, t: T, grid: &SpatialGrid<T>) -> (T, T) {
    (0..grid.n_cells()).fold((T::zero(), T::zero()), |(ma, mb), i| {
        let x = grid.center(i);
        (ma.max(c.diffusion(t, x)), mb.max(c.drift(t, x).abs()))
    })
}

impl<T: Real> Coefficients<T> for CoefficientModel<T> {
    #[inline]
    fn diffusion(&self, t: T, x: T) -> T {
        match self {
            CoefficientModel::Constant { a, .. } => *a,
            CoefficientModel::OrnsteinUhlenbeck { a, .. } => *a,
            CoefficientModel::TimeDependent(law) => match law {
                TimeLaw::SinDrift | TimeLaw::OuSinDrift => T::one(),
                TimeLaw::XSquared => x * x,
            },
            CoefficientModel::Linearized(lin) => lin.diffusion(t, x),
        }
    }

    #[inline]
    fn drift(&self, t: T, x: T) -> T {
        match self {
            CoefficientModel::Constant { b, .. } => *b,
            CoefficientModel::OrnsteinUhlenbeck { theta, .. } => -*theta * x,
            CoefficientModel::TimeDependent(law) => match law {
                TimeLaw::SinDrift => t.sin(),
                TimeLaw::OuSinDrift => t.sin() - x,
                TimeLaw::XSquared => T::zero(),
            },
            CoefficientModel::Linearized(lin) => lin.drift(t, x),
        }
    }
}

/// Monotone nonlinearity `beta(x, r)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaLaw {
    /// `beta = r`.
    Linear,
    /// `beta = r + r^3 / 3`.
    Cubic,
}

/// Space-dependent drift field `D(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftField {
    Zero,
    One,
}

/// Density-dependent drift factor `b(r)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityDrift {
    One,
    /// `b(r) = 1 / (1 + r)`.
    Inverse,
}

macro_rules! catalog_ids {
    ($ty:ident { $($variant:ident => $id:literal),* $(,)? }) => {
        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self, Error> {
                match s {
                    $($id => Ok($ty::$variant),)*
                    _ => Err(Error::UnknownCatalogId(s.to_string())),
                }
            }
        }

        impl $ty {
            pub fn id(&self) -> &'static str {
                match self {
                    $($ty::$variant => $id,)*
                }
            }
        }
    };
}

catalog_ids!(BetaLaw { Linear => "linear", Cubic => "cubic" });
catalog_ids!(DriftField { Zero => "zero", One => "one" });
catalog_ids!(DensityDrift { One => "one", Inverse => "inverse" });

impl BetaLaw {
    #[inline]
    pub fn beta<T: Real>(&self, _x: T, r: T) -> T {
        match self {
            BetaLaw::Linear => r,
            BetaLaw::Cubic => r + r * r * r / T::of(3.0),
        }
    }

    #[inline]
    pub fn beta_r<T: Real>(&self, _x: T, r: T) -> T {
        match self {
            BetaLaw::Linear => T::one(),
            BetaLaw::Cubic => T::one() + r * r,
        }
    }
}

impl DriftField {
    #[inline]
    pub fn eval<T: Real>(&self, _x: T) -> T {
        match self {
            DriftField::Zero => T::zero(),
            DriftField::One => T::one(),
        }
    }
}

impl DensityDrift {
    #[inline]
    pub fn eval<T: Real>(&self, r: T) -> T {
        match self {
            DensityDrift::One => T::one(),
            DensityDrift::Inverse => T::one() / (T::one() + r),
        }
    }
}

/// Porous-media triple for `du/dt = Lap beta(x, u) - div(D(x) b(u) u)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PorousMedia {
    pub beta: BetaLaw,
    pub d: DriftField,
    pub b: DensityDrift,
}

impl PorousMedia {
    pub fn new(beta: BetaLaw, d: DriftField, b: DensityDrift) -> Self {
        PorousMedia { beta, d, b }
    }

    /// Nemytskii diffusion `a^u = 2 beta(x, u) / u`, with the Taylor limit
    /// `2 beta_r(x, 0)` below [`DENSITY_FLOOR`].
    #[inline]
    pub fn diffusion_at<T: Real>(&self, x: T, u: T) -> T {
        if u < T::of(DENSITY_FLOOR) {
            T::of(2.0) * self.beta.beta_r(x, T::zero())
        } else {
            T::of(2.0) * self.beta.beta(x, u) / u
        }
    }

    /// Nemytskii drift `b^u = D(x) b(u)`.
    #[inline]
    pub fn drift_at<T: Real>(&self, x: T, u: T) -> T {
        self.d.eval(x) * self.b.eval(u.max(T::zero()))
    }
}

/// Porous-media coefficients frozen along a density trajectory: linear in
/// time, piecewise constant in space.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearized<T> {
    pub trajectory: DensityTrajectory<T>,
    pub porous: PorousMedia,
}

impl<T: Real> Linearized<T> {
    #[inline]
    pub fn density(&self, t: T, x: T) -> T {
        self.trajectory.value_at(t, x)
    }
}

impl<T: Real> Coefficients<T> for Linearized<T> {
    #[inline]
    fn diffusion(&self, t: T, x: T) -> T {
        self.porous.diffusion_at(x, self.density(t, x))
    }

    #[inline]
    fn drift(&self, t: T, x: T) -> T {
        self.porous.drift_at(x, self.density(t, x))
    }
}
