//! Named test functions shared by the estimators and the scenario format.

use std::str::FromStr;

use crate::error::Error;

/// Boundary/terminal data `F(t, x)` for the space-time Dirichlet problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalFn {
    /// `F = x`.
    Coordinate,
    /// `F = x^2`.
    Square,
    /// `F = 1` on the right side of the domain, `0` elsewhere.
    RightExit,
    One,
}

impl TerminalFn {
    /// Value at `(t, x)` for a domain with right end `x_right`.
    #[inline]
    pub fn eval(&self, _t: f64, x: f64, x_right: f64) -> f64 {
        match self {
            TerminalFn::Coordinate => x,
            TerminalFn::Square => x * x,
            TerminalFn::RightExit => {
                if x >= x_right {
                    1.0
                } else {
                    0.0
                }
            }
            TerminalFn::One => 1.0,
        }
    }

    pub fn sup_norm_hint(&self) -> Option<f64> {
        match self {
            TerminalFn::RightExit | TerminalFn::One => Some(1.0),
            TerminalFn::Coordinate | TerminalFn::Square => None,
        }
    }
}

/// Lyapunov functions with closed-form first and second derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LyapunovFn {
    /// `V = 1`.
    One,
    /// `V = log(1 + x^2)`.
    Log1pSq,
    /// `V = log(1 + x^2) + 1`.
    Log1pSqPlusOne,
    /// `V = x^2`.
    Square,
}

impl LyapunovFn {
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match self {
            LyapunovFn::One => 1.0,
            LyapunovFn::Log1pSq => (x * x).ln_1p(),
            LyapunovFn::Log1pSqPlusOne => (x * x).ln_1p() + 1.0,
            LyapunovFn::Square => x * x,
        }
    }

    #[inline]
    pub fn first(&self, x: f64) -> f64 {
        match self {
            LyapunovFn::One => 0.0,
            LyapunovFn::Log1pSq | LyapunovFn::Log1pSqPlusOne => 2.0 * x / (1.0 + x * x),
            LyapunovFn::Square => 2.0 * x,
        }
    }

    #[inline]
    pub fn second(&self, x: f64) -> f64 {
        match self {
            LyapunovFn::One => 0.0,
            LyapunovFn::Log1pSq | LyapunovFn::Log1pSqPlusOne => {
                let q = 1.0 + x * x;
                2.0 * (1.0 - x * x) / (q * q)
            }
            LyapunovFn::Square => 2.0,
        }
    }
}

/// Bounded test functions for resolvent checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestFn {
    One,
    /// `f = exp(-x^2)`.
    Gauss,
}

impl TestFn {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TestFn::One => 1.0,
            TestFn::Gauss => (-x * x).exp(),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        1.0
    }
}

/// Jump marks `psi(x, y)` with `psi(y, y) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsiFn {
    /// `1` off the diagonal.
    Indicator,
    /// `y - x`.
    Increment,
    /// `(y - x)^2`.
    SquaredIncrement,
}

impl PsiFn {
    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            PsiFn::Indicator => {
                if x == y {
                    0.0
                } else {
                    1.0
                }
            }
            PsiFn::Increment => y - x,
            PsiFn::SquaredIncrement => (y - x) * (y - x),
        }
    }

    pub fn parse(s: &str) -> Result<Self, Error> {
        match s {
            "one" => Ok(PsiFn::Indicator),
            "increment" => Ok(PsiFn::Increment),
            "sq_increment" => Ok(PsiFn::SquaredIncrement),
            _ => Err(Error::UnknownPsi(s.to_string())),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            PsiFn::Indicator => "one",
            PsiFn::Increment => "increment",
            PsiFn::SquaredIncrement => "sq_increment",
        }
    }

    pub const ALL: [PsiFn; 3] = [PsiFn::Indicator, PsiFn::Increment, PsiFn::SquaredIncrement];
}

macro_rules! ids {
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

ids!(TerminalFn { Coordinate => "x", Square => "square", RightExit => "right_exit", One => "one" });
ids!(LyapunovFn { One => "one", Log1pSq => "log1p_sq", Log1pSqPlusOne => "log1p_sq_plus_one", Square => "square" });
ids!(TestFn { One => "one", Gauss => "gauss" });

/// Smooth cutoff equal to 1 on `[center - plateau, center + plateau]` and 0
/// beyond `plateau + ramp`, with a `C^infinity` transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: f64,
    pub plateau: f64,
    pub ramp: f64,
}

impl Bump {
    pub fn new(center: f64, plateau: f64, ramp: f64) -> Result<Self, Error> {
        if !(plateau >= 0.0 && ramp > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bump needs plateau >= 0 and ramp > 0, got {plateau}, {ramp}"
            )));
        }
        Ok(Bump {
            center,
            plateau,
            ramp,
        })
    }

    pub fn shifted(&self, by: f64) -> Self {
        Bump {
            center: self.center + by,
            ..*self
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let d = (x - self.center).abs();
        if d <= self.plateau {
            return 1.0;
        }
        let s = (d - self.plateau) / self.ramp;
        if s >= 1.0 {
            return 0.0;
        }
        let f = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
        let (a, b) = (f(1.0 - s), f(s));
        a / (a + b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_difference(v: LyapunovFn, x: f64) -> (f64, f64) {
        let h = 1e-4;
        let d1 = (v.value(x + h) - v.value(x - h)) / (2.0 * h);
        let d2 = (v.value(x + h) - 2.0 * v.value(x) + v.value(x - h)) / (h * h);
        (d1, d2)
    }

    #[test]
    fn lyapunov_derivatives_match_finite_differences() {
        for v in [LyapunovFn::One, LyapunovFn::Log1pSq, LyapunovFn::Log1pSqPlusOne, LyapunovFn::Square] {
            for x in [-3.0, -0.7, 0.0, 0.4, 2.5] {
                let (d1, d2) = finite_difference(v, x);
                assert!((v.first(x) - d1).abs() < 1e-6, "{v:?} {x}");
                assert!((v.second(x) - d2).abs() < 1e-5, "{v:?} {x}");
            }
        }
    }

    #[test]
    fn psi_vanishes_on_diagonal() {
        for psi in PsiFn::ALL {
            assert_eq!(psi.eval(0.3, 0.3), 0.0);
        }
        assert!(matches!(PsiFn::parse("cube"), Err(Error::UnknownPsi(_))));
        assert_eq!(PsiFn::parse("sq_increment").unwrap().eval(1.0, 3.0), 4.0);
    }

    #[test]
    fn bump_shape() {
        let b = Bump::new(0.0, 1.0, 0.5).unwrap();
        assert_eq!(b.eval(0.9), 1.0);
        assert_eq!(b.eval(-1.6), 0.0);
        assert!((b.eval(1.25) - 0.5).abs() < 1e-12);
        assert!(b.eval(1.1) > b.eval(1.4));
        assert_eq!(b.shifted(2.0).eval(2.9), 1.0);
    }

    #[test]
    fn ids_round_trip() {
        assert_eq!("log1p_sq_plus_one".parse::<LyapunovFn>().unwrap(), LyapunovFn::Log1pSqPlusOne);
        assert_eq!(TerminalFn::RightExit.id(), "right_exit");
        assert_eq!(TerminalFn::RightExit.eval(0.0, 1.0, 1.0), 1.0);
        assert_eq!(TerminalFn::RightExit.eval(0.0, 0.99, 1.0), 0.0);
        assert!("sin".parse::<TestFn>().is_err());
    }
}
