//! Circular and toroidal distributions.
//!
//! The emission law of every regime is the bivariate wrapped Cauchy
//! distribution on the torus `(-π, π]²`. Its density is
//!
//! ```text
//! f(y1, y2) = c / (c0 - c1 cos(y1-μ1) - c2 cos(y2-μ2)
//!                  - c3 cos(y1-μ1) cos(y2-μ2) - c4 sin(y1-μ1) sin(y2-μ2))
//! ```
//!
//! where the six coefficients depend only on `(κ1, κ2, ρ)`. Both marginals
//! and both conditionals are univariate wrapped Cauchy, which gives exact
//! sampling by composition.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TWO_PI: f64 = 2.0 * PI;

/// Reduces any real number into `(-π, π]`.
#[inline]
pub fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TWO_PI);
    if r > PI {
        r - TWO_PI
    } else {
        r
    }
}

/// An angle in radians, always stored in canonical form `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(from = "f64", into = "f64")]
pub struct Angle(f64);

impl Angle {
    pub fn new(radians: f64) -> Self {
        Angle(wrap_angle(radians))
    }

    pub fn from_degrees(degrees: f64) -> Self {
        Angle::new(degrees.to_radians())
    }

    #[inline]
    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }
}

impl From<f64> for Angle {
    fn from(x: f64) -> Self {
        Angle::new(x)
    }
}

impl From<Angle> for f64 {
    fn from(a: Angle) -> Self {
        a.0
    }
}

impl Add for Angle {
    type Output = Angle;
    fn add(self, rhs: Angle) -> Angle {
        Angle::new(self.0 + rhs.0)
    }
}

impl Sub for Angle {
    type Output = Angle;
    fn sub(self, rhs: Angle) -> Angle {
        Angle::new(self.0 - rhs.0)
    }
}

impl Neg for Angle {
    type Output = Angle;
    fn neg(self) -> Angle {
        Angle::new(-self.0)
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Length of the shortest arc between two angles, in `[0, π]`.
#[inline]
pub fn angular_deviation(a: f64, b: f64) -> f64 {
    let diff = (a - b).rem_euclid(TWO_PI);
    PI - (PI - diff).abs()
}

/// Circular mean direction of a set of angles. `None` when the resultant vanishes.
pub fn circular_mean<I: IntoIterator<Item = f64>>(angles: I) -> Option<Angle> {
    let (mut s, mut c) = (0.0, 0.0);
    for a in angles {
        s += a.sin();
        c += a.cos();
    }
    if s.hypot(c) < 1e-300 {
        None
    } else {
        Some(Angle::new(s.atan2(c)))
    }
}

/// A point on the torus.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TorusPoint {
    pub y1: Angle,
    pub y2: Angle,
}

impl TorusPoint {
    pub fn new(y1: f64, y2: f64) -> Self {
        TorusPoint {
            y1: Angle::new(y1),
            y2: Angle::new(y2),
        }
    }
}

/// Which coordinate of a torus point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coordinate {
    First,
    Second,
}

/// Univariate wrapped Cauchy law with mean direction `mu` and concentration
/// `kappa` (the mean resultant length).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WrappedCauchy {
    mu: Angle,
    kappa: f64,
}

impl WrappedCauchy {
    pub fn new(mu: f64, kappa: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&kappa) {
            return Err(Error::Domain(format!(
                "wrapped Cauchy concentration must lie in [0, 1), got {kappa}"
            )));
        }
        Ok(WrappedCauchy {
            mu: Angle::new(mu),
            kappa,
        })
    }

    pub fn mu(&self) -> Angle {
        self.mu
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn density(&self, y: f64) -> f64 {
        let k = self.kappa;
        (1.0 - k * k) / (TWO_PI * (1.0 + k * k - 2.0 * k * (y - self.mu.0).cos()))
    }

    pub fn ln_density(&self, y: f64) -> f64 {
        self.density(y).ln()
    }

    /// First trigonometric moment `E[cos Y] + i E[sin Y]` as `(cos, sin)` parts.
    pub fn first_moment(&self) -> (f64, f64) {
        (self.kappa * self.mu.0.cos(), self.kappa * self.mu.0.sin())
    }

    /// Inverse CDF in the form `μ + 2 atan(((1-κ)/(1+κ)) tan(π(u - 1/2)))`.
    pub fn quantile(&self, u: f64) -> Angle {
        let ratio = (1.0 - self.kappa) / (1.0 + self.kappa);
        Angle::new(self.mu.0 + 2.0 * (ratio * (PI * (u - 0.5)).tan()).atan())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Angle {
        let u: f64 = rng.random();
        self.quantile(u)
    }
}

/// The six coefficients `c, c0..c4` of the bivariate wrapped Cauchy density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BwcCoefficients {
    pub c: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl BwcCoefficients {
    pub fn new(kappa1: f64, kappa2: f64, rho: f64) -> Self {
        let (k1, k2) = (kappa1, kappa2);
        let a = rho.abs();
        let r2 = 1.0 + rho * rho;
        let p1 = 1.0 + k1 * k1;
        let p2 = 1.0 + k2 * k2;
        let n1 = 1.0 - k1 * k1;
        let n2 = 1.0 - k2 * k2;
        BwcCoefficients {
            c: (1.0 - rho * rho) * n1 * n2 / (4.0 * PI * PI),
            c0: r2 * p1 * p2 - 8.0 * a * k1 * k2,
            c1: 2.0 * r2 * k1 * p2 - 4.0 * a * p1 * k2,
            c2: 2.0 * r2 * p1 * k2 - 4.0 * a * k1 * p2,
            c3: -4.0 * r2 * k1 * k2 + 2.0 * a * p1 * p2,
            c4: 2.0 * rho * n1 * n2,
        }
    }

    /// Denominator of the density given cos/sin of the centred coordinates.
    #[inline]
    pub fn denominator(&self, cos1: f64, sin1: f64, cos2: f64, sin2: f64) -> f64 {
        self.c0 - self.c1 * cos1 - self.c2 * cos2 - self.c3 * cos1 * cos2 - self.c4 * sin1 * sin2
    }
}

/// Parameters `(μ1, μ2, κ1, κ2, ρ)` of the bivariate wrapped Cauchy law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToroidalParams {
    mu1: Angle,
    mu2: Angle,
    kappa1: f64,
    kappa2: f64,
    rho: f64,
}

impl ToroidalParams {
    pub fn new(mu1: f64, mu2: f64, kappa1: f64, kappa2: f64, rho: f64) -> Result<Self> {
        for (name, k) in [("kappa1", kappa1), ("kappa2", kappa2)] {
            if !(0.0..1.0).contains(&k) {
                return Err(Error::Domain(format!("{name} must lie in [0, 1), got {k}")));
            }
        }
        if !(rho > -1.0 && rho < 1.0) {
            return Err(Error::Domain(format!("rho must lie in (-1, 1), got {rho}")));
        }
        if !mu1.is_finite() || !mu2.is_finite() {
            return Err(Error::Domain("mean directions must be finite".into()));
        }
        Ok(ToroidalParams {
            mu1: Angle::new(mu1),
            mu2: Angle::new(mu2),
            kappa1,
            kappa2,
            rho,
        })
    }

    pub fn mu1(&self) -> Angle {
        self.mu1
    }
    pub fn mu2(&self) -> Angle {
        self.mu2
    }
    pub fn kappa1(&self) -> f64 {
        self.kappa1
    }
    pub fn kappa2(&self) -> f64 {
        self.kappa2
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `[μ1, μ2, κ1, κ2, ρ]`.
    pub fn to_array(&self) -> [f64; 5] {
        [self.mu1.0, self.mu2.0, self.kappa1, self.kappa2, self.rho]
    }

    pub fn from_array(v: [f64; 5]) -> Result<Self> {
        ToroidalParams::new(v[0], v[1], v[2], v[3], v[4])
    }

    pub fn coefficients(&self) -> BwcCoefficients {
        BwcCoefficients::new(self.kappa1, self.kappa2, self.rho)
    }

    pub fn density(&self, y: TorusPoint) -> f64 {
        let x1 = y.y1.0 - self.mu1.0;
        let x2 = y.y2.0 - self.mu2.0;
        let coef = self.coefficients();
        coef.c / coef.denominator(x1.cos(), x1.sin(), x2.cos(), x2.sin())
    }

    pub fn ln_density(&self, y: TorusPoint) -> f64 {
        let x1 = y.y1.0 - self.mu1.0;
        let x2 = y.y2.0 - self.mu2.0;
        let coef = self.coefficients();
        coef.c.ln() - coef.denominator(x1.cos(), x1.sin(), x2.cos(), x2.sin()).ln()
    }

    pub fn marginal(&self, coordinate: Coordinate) -> WrappedCauchy {
        match coordinate {
            Coordinate::First => WrappedCauchy {
                mu: self.mu1,
                kappa: self.kappa1,
            },
            Coordinate::Second => WrappedCauchy {
                mu: self.mu2,
                kappa: self.kappa2,
            },
        }
    }

    /// Law of the second coordinate given the first.
    ///
    /// With `x1 = y1 - μ1` the joint denominator in `y2` reads
    /// `a - R cos(y2 - μ2 - ν)`, which is a wrapped Cauchy kernel with mean
    /// `μ2 + ν` and concentration `R / (a + sqrt(a² - R²))`.
    pub fn conditional(&self, given_first: Angle) -> WrappedCauchy {
        let coef = self.coefficients();
        let x1 = given_first.0 - self.mu1.0;
        let (s1, c1) = x1.sin_cos();
        let a = coef.c0 - coef.c1 * c1;
        let b = coef.c2 + coef.c3 * c1;
        let s = coef.c4 * s1;
        let r = b.hypot(s);
        if r <= f64::EPSILON * a.abs() {
            return WrappedCauchy {
                mu: self.mu2,
                kappa: 0.0,
            };
        }
        let kappa = r / (a + ((a - r) * (a + r)).max(0.0).sqrt());
        WrappedCauchy {
            mu: Angle::new(self.mu2.0 + s.atan2(b)),
            kappa: kappa.min(1.0 - f64::EPSILON),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TorusPoint {
        let y1 = self.marginal(Coordinate::First).sample(rng);
        let y2 = self.conditional(y1).sample(rng);
        TorusPoint { y1, y2 }
    }

    /// `n` i.i.d. draws from a ChaCha8 stream seeded with `seed`.
    pub fn sample_n(&self, n: usize, seed: u64) -> Vec<TorusPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.sample(&mut rng)).collect()
    }

    /// Circular regression of the second angle on the first: the mean
    /// direction of the conditional law at each grid point.
    pub fn regression_curve(&self, y1_grid: &[Angle]) -> Vec<Angle> {
        y1_grid.iter().map(|&y1| self.conditional(y1).mu).collect()
    }

    /// Parameters with the sign of `ρ` flipped.
    pub fn reflected(&self) -> Self {
        ToroidalParams { rho: -self.rho, ..*self }
    }
}

/// Checks the identity `f(y1, y2; ρ) = f(y1, 2μ2 - y2; -ρ)`.
pub fn reflection_check(theta: &ToroidalParams, y: TorusPoint) -> bool {
    let lhs = theta.density(y);
    let mirrored = TorusPoint {
        y1: y.y1,
        y2: Angle::new(2.0 * theta.mu2.0 - y.y2.0),
    };
    let rhs = theta.reflected().density(mirrored);
    (lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0)
}
