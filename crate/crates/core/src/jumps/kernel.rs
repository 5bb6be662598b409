use std::str::FromStr;

use statrs::function::erf::erfc;

use crate::catalog::PsiFn;
use crate::error::{Error, Result};
use crate::rng::{normal, uniform};

/// Total jump rate `c(t, x) = K(t, x, R)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateLaw {
    Constant(f64),
    /// `c(x) = peak * exp(-x^2)`.
    Bump { peak: f64 },
}

impl RateLaw {
    #[inline]
    pub fn eval(&self, _t: f64, x: f64) -> f64 {
        match *self {
            RateLaw::Constant(c) => c,
            RateLaw::Bump { peak } => peak * (-x * x).exp(),
        }
    }

    /// Supremum over the whole line.
    pub fn sup(&self) -> f64 {
        match *self {
            RateLaw::Constant(c) => c,
            RateLaw::Bump { peak } => peak,
        }
    }
}

/// Law `q` of the displacement `y - x` at a jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Displacement {
    Gaussian { mean: f64, var: f64 },
    /// `left` with probability `p_left`, `right` otherwise.
    TwoPoint { left: f64, right: f64, p_left: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl Displacement {
    pub fn point(at: f64) -> Self {
        Displacement::TwoPoint {
            left: at,
            right: at,
            p_left: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Displacement::Gaussian { mean, var } => mean.is_finite() && var >= 0.0 && var.is_finite(),
            Displacement::TwoPoint { left, right, p_left } => {
                left.is_finite() && right.is_finite() && (0.0..=1.0).contains(&p_left)
            }
            Displacement::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid displacement law {self:?}")))
        }
    }

    #[inline]
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Displacement::Gaussian { mean, var } => mean + var.sqrt() * normal(rng),
            Displacement::TwoPoint { left, right, p_left } => {
                if uniform(rng) < p_left {
                    left
                } else {
                    right
                }
            }
            Displacement::Uniform { lo, hi } => lo + (hi - lo) * uniform(rng),
        }
    }

    /// `P(z = 0)`.
    pub fn atom_at_zero(&self) -> f64 {
        match *self {
            Displacement::Gaussian { mean, var } if var == 0.0 && mean == 0.0 => 1.0,
            Displacement::TwoPoint { left, right, p_left } => {
                let mut p = 0.0;
                if left == 0.0 {
                    p += p_left;
                }
                if right == 0.0 {
                    p += 1.0 - p_left;
                }
                p
            }
            _ => 0.0,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Displacement::Gaussian { mean, .. } => mean,
            Displacement::TwoPoint { left, right, p_left } => p_left * left + (1.0 - p_left) * right,
            Displacement::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    /// `E z^2`.
    pub fn second_moment(&self) -> f64 {
        match *self {
            Displacement::Gaussian { mean, var } => mean * mean + var,
            Displacement::TwoPoint { left, right, p_left } => {
                p_left * left * left + (1.0 - p_left) * right * right
            }
            Displacement::Uniform { lo, hi } => (lo * lo + lo * hi + hi * hi) / 3.0,
        }
    }

    pub fn variance(&self) -> f64 {
        self.second_moment() - self.mean() * self.mean()
    }

    /// Probability of each cell offset `k` (displacement in
    /// `[(k - 1/2) dx, (k + 1/2) dx)`); atoms are split linearly between the two
    /// neighbouring offsets so the mean is exact.
    pub fn offset_weights(&self, dx: f64) -> Vec<(isize, f64)> {
        let mut out: Vec<(isize, f64)> = Vec::new();
        let mut push = |k: isize, w: f64| {
            if w > 0.0 {
                match out.iter_mut().find(|(j, _)| *j == k) {
                    Some((_, acc)) => *acc += w,
                    None => out.push((k, w)),
                }
            }
        };
        let atom = |z: f64, p: f64, push: &mut dyn FnMut(isize, f64)| {
            let pos = z / dx;
            let k0 = pos.floor();
            let f = pos - k0;
            push(k0 as isize, p * (1.0 - f));
            push(k0 as isize + 1, p * f);
        };
        match *self {
            Displacement::Gaussian { mean, var: 0.0 } => atom(mean, 1.0, &mut push),
            Displacement::Gaussian { mean, var } => {
                let s = var.sqrt();
                let reach = ((mean.abs() + 9.0 * s) / dx).ceil() as isize + 1;
                let cdf = |z: f64| 0.5 * erfc(-(z - mean) / (s * std::f64::consts::SQRT_2));
                for k in -reach..=reach {
                    let kf = k as f64;
                    push(k, cdf((kf + 0.5) * dx) - cdf((kf - 0.5) * dx));
                }
            }
            Displacement::TwoPoint { left, right, p_left } => {
                atom(left, p_left, &mut push);
                atom(right, 1.0 - p_left, &mut push);
            }
            Displacement::Uniform { lo, hi } => {
                let k_lo = (lo / dx - 0.5).floor() as isize;
                let k_hi = (hi / dx + 0.5).ceil() as isize;
                for k in k_lo..=k_hi {
                    let kf = k as f64;
                    let a = ((kf - 0.5) * dx).max(lo);
                    let b = ((kf + 0.5) * dx).min(hi);
                    push(k, (b - a).max(0.0) / (hi - lo));
                }
            }
        }
        out.sort_by_key(|&(k, _)| k);
        out
    }
}

/// Bounded jump kernel `K(t, x, dy) = c(t, x) q(dy - x)` with a thinning bound
/// `lambda >= sup c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpKernel {
    pub rate: RateLaw,
    pub displacement: Displacement,
    lambda: f64,
}

impl JumpKernel {
    /// Kernel whose thinning bound is the supremum of the rate.
    pub fn new(rate: RateLaw, displacement: Displacement) -> Result<Self> {
        Self::with_bound(rate, displacement, rate.sup())
    }

    /// Kernel with an explicit thinning bound `lambda`.
    pub fn with_bound(rate: RateLaw, displacement: Displacement, lambda: f64) -> Result<Self> {
        displacement.validate()?;
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::KernelUnbounded(format!("thinning bound {lambda}")));
        }
        if !(rate.sup().is_finite() && rate.sup() >= 0.0) {
            return Err(Error::KernelUnbounded(format!("rate {rate:?}")));
        }
        Ok(JumpKernel {
            rate,
            displacement,
            lambda,
        })
    }

    /// The zero kernel.
    pub fn zero() -> Self {
        JumpKernel {
            rate: RateLaw::Constant(0.0),
            displacement: Displacement::point(0.0),
            lambda: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.lambda == 0.0 && self.rate.sup() == 0.0
    }

    /// Thinning bound.
    pub fn bound(&self) -> f64 {
        self.lambda
    }

    #[inline]
    pub fn rate(&self, t: f64, x: f64) -> f64 {
        self.rate.eval(t, x)
    }

    /// Closed form of `integral psi(x, y) q(dy - x)`.
    pub fn mark_mean(&self, psi: PsiFn) -> f64 {
        let q = &self.displacement;
        match psi {
            PsiFn::Indicator => 1.0 - q.atom_at_zero(),
            PsiFn::Increment => q.mean(),
            PsiFn::SquaredIncrement => q.second_moment(),
        }
    }
}

impl FromStr for RateLaw {
    type Err = Error;

    /// `constant:<c>` or `bump:<peak>`.
    fn from_str(s: &str) -> Result<Self> {
        let (id, arg) = s.split_once(':').unwrap_or((s, ""));
        let v: f64 = arg
            .trim()
            .parse()
            .map_err(|_| Error::UnknownCatalogId(s.to_string()))?;
        match id.trim() {
            "constant" => Ok(RateLaw::Constant(v)),
            "bump" => Ok(RateLaw::Bump { peak: v }),
            _ => Err(Error::UnknownCatalogId(s.to_string())),
        }
    }
}

impl FromStr for Displacement {
    type Err = Error;

    /// `gaussian:<mean>,<var>`, `point:<z>`, `two_point:<left>,<right>,<p_left>`
    /// or `uniform:<lo>,<hi>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnknownCatalogId(s.to_string());
        let (id, args) = s.split_once(':').ok_or_else(bad)?;
        let v: Vec<f64> = args
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        let d = match (id.trim(), v.as_slice()) {
            ("gaussian", [m, var]) => Displacement::Gaussian { mean: *m, var: *var },
            ("point", [z]) => Displacement::point(*z),
            ("two_point", [l, r, p]) => Displacement::TwoPoint {
                left: *l,
                right: *r,
                p_left: *p,
            },
            ("uniform", [lo, hi]) => Displacement::Uniform { lo: *lo, hi: *hi },
            _ => return Err(bad()),
        };
        d.validate()?;
        Ok(d)
    }
}

impl std::fmt::Display for RateLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RateLaw::Constant(c) => write!(f, "constant:{c}"),
            RateLaw::Bump { peak } => write!(f, "bump:{peak}"),
        }
    }
}

impl std::fmt::Display for Displacement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Displacement::Gaussian { mean, var } => write!(f, "gaussian:{mean},{var}"),
            Displacement::TwoPoint { left, right, p_left } if left == right && *p_left == 1.0 => {
                write!(f, "point:{left}")
            }
            Displacement::TwoPoint { left, right, p_left } => write!(f, "two_point:{left},{right},{p_left}"),
            Displacement::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(w: &[(isize, f64)], dx: f64) -> (f64, f64, f64) {
        let m0: f64 = w.iter().map(|p| p.1).sum();
        let m1: f64 = w.iter().map(|&(k, p)| k as f64 * dx * p).sum();
        let m2: f64 = w.iter().map(|&(k, p)| (k as f64 * dx).powi(2) * p).sum();
        (m0, m1, m2)
    }

    #[test]
    fn offset_weights_preserve_moments() {
        let dx = 0.005;
        let g = Displacement::Gaussian { mean: 0.3, var: 0.01 };
        let (m0, m1, m2) = moments(&g.offset_weights(dx), dx);
        assert!((m0 - 1.0).abs() < 1e-12);
        assert!((m1 - 0.3).abs() < 1e-9);
        // Cell integration adds dx^2 / 12 to the variance.
        assert!((m2 - (0.09 + 0.01 + dx * dx / 12.0)).abs() < 1e-8);

        let p = Displacement::point(0.5123);
        let (m0, m1, _) = moments(&p.offset_weights(dx), dx);
        assert!((m0 - 1.0).abs() < 1e-15);
        assert!((m1 - 0.5123).abs() < 1e-12);

        let u = Displacement::Uniform { lo: -0.2, hi: 0.1 };
        let (m0, m1, _) = moments(&u.offset_weights(dx), dx);
        assert!((m0 - 1.0).abs() < 1e-12);
        assert!((m1 + 0.05).abs() < 1e-4);
    }

    #[test]
    fn mark_means() {
        let k = JumpKernel::new(
            RateLaw::Constant(2.0),
            Displacement::Gaussian { mean: 0.3, var: 0.01 },
        )
        .unwrap();
        assert_eq!(k.mark_mean(PsiFn::Indicator), 1.0);
        assert_eq!(k.mark_mean(PsiFn::Increment), 0.3);
        assert!((k.mark_mean(PsiFn::SquaredIncrement) - 0.1).abs() < 1e-15);
        let two = Displacement::TwoPoint { left: 0.0, right: 1.0, p_left: 0.25 };
        let k = JumpKernel::new(RateLaw::Constant(1.0), two).unwrap();
        assert_eq!(k.mark_mean(PsiFn::Indicator), 0.75);
    }

    #[test]
    fn parse_and_display() {
        for s in ["gaussian:0.3,0.01", "point:0.5", "two_point:-1,1,0.5", "uniform:-0.1,0.2"] {
            let d: Displacement = s.parse().unwrap();
            assert_eq!(d.to_string(), s);
        }
        assert_eq!("bump:3".parse::<RateLaw>().unwrap(), RateLaw::Bump { peak: 3.0 });
        assert!("uniform:1,0".parse::<Displacement>().is_err());
        assert!("cauchy:1".parse::<Displacement>().is_err());
    }

    #[test]
    fn unbounded_rejected() {
        let r = JumpKernel::new(RateLaw::Constant(f64::INFINITY), Displacement::point(1.0));
        assert!(matches!(r, Err(Error::KernelUnbounded(_))));
    }
}
