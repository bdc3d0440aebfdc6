//! Single-particle conformal building blocks.
//!
//! Angles are measured in half-turns: `x` denotes the boundary point
//! `exp(i*pi*x)`, so the unit circle has length 2. A particle of logarithmic
//! capacity `c` is a radial slit `(1, 1 + d]` with `e^c = 1 + d^2 / (4(1 + d))`.
//!
//! The slit map is assembled from `h(z) = z + 2 + 1/z`, which sends the
//! exterior disk onto `C \ [0, 4]` and the slit `(1, 1 + d]` onto
//! `(4, (2 + d)^2 / (1 + d)]`. Scaling by `e^c` stretches `[0, 4]` onto that
//! longer segment, so `f_c = h^{-1}(e^c h(z))` with the branch of `h^{-1}`
//! that lands outside the disk.

use std::f64::consts::{FRAC_2_PI, PI};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Logarithmic capacity of a single particle.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Capacity(f64);

impl Capacity {
    pub fn new(c: f64) -> Result<Self> {
        if c.is_finite() && c > 0.0 {
            Ok(Self(c))
        } else {
            Err(Error::domain(format!("capacity must be positive and finite, got {c}")))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Capacity {
    type Error = Error;

    fn try_from(c: f64) -> Result<Self> {
        Self::new(c)
    }
}

impl From<Capacity> for f64 {
    fn from(c: Capacity) -> f64 {
        c.0
    }
}

impl fmt::Display for Capacity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Euclidean length of the slit paired with a capacity.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SlitLength(f64);

impl SlitLength {
    pub fn new(d: f64) -> Result<Self> {
        if d.is_finite() && d > 0.0 {
            Ok(Self(d))
        } else {
            Err(Error::domain(format!("slit length must be positive and finite, got {d}")))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

/// A boundary position in half-turn units, stored in `[-1, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct AngleHT(f64);

impl AngleHT {
    pub fn new(x: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::domain(format!("angle must be finite, got {x}")));
        }
        Ok(Self(canonical_angle(x)))
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    /// The boundary point `exp(i*pi*x)`.
    pub fn boundary_point(self) -> Complex64 {
        Complex64::from_polar(1.0, PI * self.0)
    }
}

/// Reduces `x` modulo 2 into `[-1, 1)`.
#[inline]
pub fn canonical_angle(x: f64) -> f64 {
    let mut r = x - 2.0 * ((x + 1.0) * 0.5).floor();
    if r >= 1.0 {
        r -= 2.0;
    } else if r < -1.0 {
        r += 2.0;
    }
    r
}

/// A point of the Riemann sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ComplexPoint {
    Finite(Complex64),
    Infinity,
}

impl ComplexPoint {
    pub fn new(re: f64, im: f64) -> Self {
        ComplexPoint::Finite(Complex64::new(re, im))
    }

    pub fn finite(self) -> Option<Complex64> {
        match self {
            ComplexPoint::Finite(z) => Some(z),
            ComplexPoint::Infinity => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, ComplexPoint::Infinity)
    }
}

impl From<Complex64> for ComplexPoint {
    fn from(z: Complex64) -> Self {
        ComplexPoint::Finite(z)
    }
}

pub fn slit_length_from_capacity(c: Capacity) -> SlitLength {
    SlitLength(slit_length_raw(c.get()))
}

#[inline]
pub(crate) fn slit_length_raw(c: f64) -> f64 {
    // Positive root of d^2 - 4m d - 4m = 0 with m = e^c - 1.
    let m = c.exp_m1();
    2.0 * m + 2.0 * (m * m + m).sqrt()
}

pub fn capacity_from_slit_length(d: SlitLength) -> Capacity {
    let d = d.get();
    Capacity((d * d / (4.0 * (1.0 + d))).ln_1p())
}

/// Boundary angle map: where the point `exp(i*pi*x)` of the grown domain
/// comes from on the unit circle. Right-continuous at even integers and
/// satisfies `gamma(c, x + 2n) = gamma(c, x) + 2n`.
pub fn gamma(c: Capacity, x: f64) -> f64 {
    gamma_raw(c.get(), x)
}

/// Rotated angle map `theta + gamma(c, x - theta)` for a particle attached at `theta`.
pub fn gamma_rotated(c: Capacity, theta: AngleHT, x: f64) -> f64 {
    let theta = theta.get();
    theta + gamma_raw(c.get(), x - theta)
}

/// Displacement `gamma(c, x) - x`: 2-periodic and odd away from the
/// discontinuity. Evaluated without cancellation, so it keeps full relative
/// precision even when the displacement is far below `x`.
pub fn gamma_tilde(c: Capacity, x: f64) -> f64 {
    gamma_tilde_raw(c.get(), x)
}

#[inline]
pub(crate) fn gamma_raw(c: f64, x: f64) -> f64 {
    let r = canonical_angle(x);
    let shift = x - r;
    shift + gamma_principal(c, r)
}

// gamma on [-1, 1).
#[inline]
fn gamma_principal(c: f64, r: f64) -> f64 {
    let m = c.exp_m1();
    if r == -1.0 {
        return -1.0;
    }
    if r == 0.0 {
        return FRAC_2_PI * m.sqrt().atan();
    }
    let a = r.abs();
    let val = if a <= 0.5 {
        let t = (0.5 * PI * a).tan();
        FRAC_2_PI * (c.exp() * t * t + m).sqrt().atan()
    } else {
        // Complementary form avoids tan overflow as a -> 1.
        let u = (0.5 * PI * (1.0 - a)).tan();
        1.0 - FRAC_2_PI * (u / (c.exp() + m * u * u).sqrt()).atan()
    };
    val.copysign(r)
}

#[inline]
pub(crate) fn gamma_tilde_raw(c: f64, x: f64) -> f64 {
    let r = canonical_angle(x);
    let m = c.exp_m1();
    if r == -1.0 {
        return 0.0;
    }
    if r == 0.0 {
        return FRAC_2_PI * m.sqrt().atan();
    }
    let a = r.abs();
    // atan(p) - atan(q) = atan((p - q) / (1 + p q)) with the difference
    // p - q rewritten so that the factor m = e^c - 1 appears explicitly.
    let val = if a <= 0.5 {
        let t = (0.5 * PI * a).tan();
        let s = (c.exp() * t * t + m).sqrt();
        FRAC_2_PI * (m * (1.0 + t * t) / ((s + t) * (1.0 + s * t))).atan()
    } else {
        let u = (0.5 * PI * (1.0 - a)).tan();
        let q = (c.exp() + m * u * u).sqrt();
        FRAC_2_PI * (u * m * (1.0 + u * u) / ((q + 1.0) * (q + u * u))).atan()
    };
    val.copysign(r)
}

/// Leading-order two-regime approximation of `gamma` for small capacity.
/// Only meaningful as an oracle; the simulation never uses it.
pub fn gamma_taylor(c: Capacity, x: f64) -> Result<f64> {
    if !(x.abs() < 1.0) {
        return Err(Error::domain(format!("gamma_taylor needs |x| < 1, got {x}")));
    }
    let c = c.get();
    let cutoff = c.sqrt() * (1.0 / c).ln();
    let a = x.abs();
    let val = if a <= cutoff {
        (a * a + 4.0 * c / (PI * PI)).sqrt()
    } else {
        a + c / (0.5 * PI * a).tan() / PI
    };
    // Right-continuous at 0, like gamma.
    Ok(if x < 0.0 { -val } else { val })
}

/// The slit map `f_c`, defined on the closed exterior disk. Points with
/// `|z| < 1` (beyond a 1e-12 rounding allowance) are rejected.
pub fn slit_map(c: Capacity, z: ComplexPoint) -> Result<ComplexPoint> {
    match z {
        ComplexPoint::Infinity => Ok(ComplexPoint::Infinity),
        ComplexPoint::Finite(z) => {
            check_exterior(z)?;
            Ok(ComplexPoint::Finite(slit_map_raw(c.get(), z)))
        }
    }
}

/// `exp(i*pi*theta) * f_c(exp(-i*pi*theta) * z)`: a slit attached at `exp(i*pi*theta)`.
pub fn slit_map_rotated(c: Capacity, theta: AngleHT, z: ComplexPoint) -> Result<ComplexPoint> {
    match z {
        ComplexPoint::Infinity => Ok(ComplexPoint::Infinity),
        ComplexPoint::Finite(z) => {
            check_exterior(z)?;
            let rot = theta.boundary_point();
            Ok(ComplexPoint::Finite(rot * slit_map_raw(c.get(), rot.conj() * z)))
        }
    }
}

fn check_exterior(z: Complex64) -> Result<()> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::domain("slit map argument must be finite or the point at infinity"));
    }
    if z.norm() < 1.0 - 1e-12 {
        return Err(Error::domain(format!(
            "slit map is defined outside the unit disk, got |z| = {}",
            z.norm()
        )));
    }
    Ok(())
}

#[inline]
pub(crate) fn slit_map_raw(c: f64, z: Complex64) -> Complex64 {
    let w = (z + 2.0 + z.inv()) * c.exp();
    let p = w - 2.0;
    let s = (w * (w - 4.0)).sqrt();
    let r1 = (p + s) * 0.5;
    let r2 = (p - s) * 0.5;
    // The two preimages of w under h have product 1. Off the real axis the
    // map preserves the upper and lower half planes, which separates them even
    // on the unit circle where both have modulus 1. Near the slit both roots
    // are almost real and rounding can give them opposite-sign imaginary
    // parts, so the half-plane choice is only trusted outside the disk.
    let big = if r1.norm_sqr() >= r2.norm_sqr() { r1 } else { r2 };
    if z.im != 0.0 && r1.im != 0.0 && r2.im != 0.0 && (r1.im > 0.0) != (r2.im > 0.0) {
        let matching = if (r1.im > 0.0) == (z.im > 0.0) { r1 } else { r2 };
        if matching.norm_sqr() >= 1.0 - 1e-12 {
            return matching;
        }
    }
    big
}
