//! Size profiles: how particle capacities depend on colour and on the current
//! red harmonic measure, together with the arrival-rate schedule.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;

/// Arrival rate `r(c)` of the Poisson clock.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateSchedule {
    /// `c^{-3/2}`: the diffusive scaling.
    Diffusive,
    /// `(c log(1/c))^{-1}`: the deterministic (ODE) scaling.
    Ballistic,
    /// Any positive expression in `c`.
    Custom(Expr),
}

impl RateSchedule {
    #[inline]
    pub fn rate(&self, c: f64) -> f64 {
        match self {
            RateSchedule::Diffusive => c.powf(-1.5),
            RateSchedule::Ballistic => 1.0 / (c * (1.0 / c).ln()),
            RateSchedule::Custom(e) => e.eval(0.0, c),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "diffusive" => Ok(RateSchedule::Diffusive),
            "ballistic" => Ok(RateSchedule::Ballistic),
            other => Ok(RateSchedule::Custom(Expr::parse(other)?)),
        }
    }
}

/// User-defined capacity multipliers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CustomSizes {
    pub s_plus: Expr,
    pub s_minus: Expr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_plus_limit: Option<Expr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_minus_limit: Option<Expr>,
    /// Limit of `c^{-1/2} log(1/c) (s+ - s-)`, for diffusive profiles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Expr>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProfileModel {
    /// `s+ = s- = 1`: plain HL(0) with colours attached.
    Hl0,
    /// The ergodic coexistence example with uniform stationary law.
    Coexistence,
    /// `s+ = 2 - x`, `s- = x`: deterministic limit with a stable fixed point at 1.
    OdeFixedPoint,
    Custom(CustomSizes),
}

/// The functions `s+(x, c)`, `s-(x, c)`, their limits, the drift profile and the rate schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeProfile {
    pub model: ProfileModel,
    pub rate: RateSchedule,
}

const COEX_BASE: f64 = 3.0 / 16.0;

#[inline]
fn coexistence_base(x: f64) -> f64 {
    PI * PI * (COEX_BASE * x * (2.0 - x)).powf(2.0 / 3.0)
}

#[inline]
fn coexistence_tilt(c: f64) -> f64 {
    PI * PI * c.sqrt() / (1.0 / c).ln()
}

impl SizeProfile {
    pub fn hl0() -> Self {
        Self {
            model: ProfileModel::Hl0,
            rate: RateSchedule::Diffusive,
        }
    }

    pub fn coexistence() -> Self {
        Self {
            model: ProfileModel::Coexistence,
            rate: RateSchedule::Diffusive,
        }
    }

    pub fn ode_fixed_point() -> Self {
        Self {
            model: ProfileModel::OdeFixedPoint,
            rate: RateSchedule::Ballistic,
        }
    }

    pub fn custom(sizes: CustomSizes, rate: RateSchedule) -> Result<Self> {
        for (name, e) in [("s_plus_limit", &sizes.s_plus_limit), ("s_minus_limit", &sizes.s_minus_limit), ("h", &sizes.h)] {
            if e.as_ref().is_some_and(Expr::depends_on_c) {
                return Err(Error::Config(format!("{name} is a limit and may not depend on c")));
            }
        }
        let profile = Self {
            model: ProfileModel::Custom(sizes),
            rate,
        };
        Ok(profile)
    }

    /// Built-in profiles by name. `section4` is accepted as an alias of `coexistence`.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "hl0" => Ok(Self::hl0()),
            "coexistence" | "section4" => Ok(Self::coexistence()),
            "ode-fixed-point" => Ok(Self::ode_fixed_point()),
            other => Err(Error::Config(format!(
                "unknown profile '{other}' (expected hl0, coexistence, ode-fixed-point)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.model {
            ProfileModel::Hl0 => "hl0",
            ProfileModel::Coexistence => "coexistence",
            ProfileModel::OdeFixedPoint => "ode-fixed-point",
            ProfileModel::Custom(_) => "custom",
        }
    }

    #[inline]
    pub fn rate(&self, c: f64) -> f64 {
        self.rate.rate(c)
    }

    #[inline]
    pub fn s_plus(&self, x: f64, c: f64) -> f64 {
        match &self.model {
            ProfileModel::Hl0 => 1.0,
            ProfileModel::Coexistence => coexistence_base(x) + coexistence_tilt(c) * (2.0 - x),
            ProfileModel::OdeFixedPoint => 2.0 - x,
            ProfileModel::Custom(s) => s.s_plus.eval(x, c),
        }
    }

    #[inline]
    pub fn s_minus(&self, x: f64, c: f64) -> f64 {
        match &self.model {
            ProfileModel::Hl0 => 1.0,
            ProfileModel::Coexistence => coexistence_base(x) + coexistence_tilt(c) * x,
            ProfileModel::OdeFixedPoint => x,
            ProfileModel::Custom(s) => s.s_minus.eval(x, c),
        }
    }

    pub fn s_plus_limit(&self, x: f64) -> Option<f64> {
        match &self.model {
            ProfileModel::Hl0 => Some(1.0),
            ProfileModel::Coexistence => Some(coexistence_base(x)),
            ProfileModel::OdeFixedPoint => Some(2.0 - x),
            ProfileModel::Custom(s) => s.s_plus_limit.as_ref().map(|e| e.eval(x, 0.0)),
        }
    }

    pub fn s_minus_limit(&self, x: f64) -> Option<f64> {
        match &self.model {
            ProfileModel::Hl0 => Some(1.0),
            ProfileModel::Coexistence => Some(coexistence_base(x)),
            ProfileModel::OdeFixedPoint => Some(x),
            ProfileModel::Custom(s) => s.s_minus_limit.as_ref().map(|e| e.eval(x, 0.0)),
        }
    }

    /// The drift profile `h(x)`, where declared.
    pub fn h(&self, x: f64) -> Option<f64> {
        match &self.model {
            ProfileModel::Hl0 => Some(0.0),
            ProfileModel::Coexistence => Some(2.0 * PI * PI * (1.0 - x)),
            ProfileModel::OdeFixedPoint => None,
            ProfileModel::Custom(s) => s.h.as_ref().map(|e| e.eval(x, 0.0)),
        }
    }

    /// Largest of `s+` and `s-` over a grid on `(0, 2)`.
    pub fn max_size(&self, c: f64) -> f64 {
        (1..200)
            .map(|i| i as f64 / 100.0)
            .map(|x| self.s_plus(x, c).max(self.s_minus(x, c)))
            .fold(0.0, f64::max)
    }

    /// Spot-checks positivity, finiteness and a finite-difference Lipschitz
    /// bound of `s±(., c)` on a grid of `(0, 2)`. Returns the largest observed
    /// difference quotient on `[0.05, 1.95]`.
    pub fn validate(&self, c: f64) -> Result<f64> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::domain(format!("capacity scale must be positive, got {c}")));
        }
        let r = self.rate(c);
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::domain(format!("rate r(c) must be positive and finite, got {r} at c = {c}")));
        }
        let n = 400;
        let mut lipschitz: f64 = 0.0;
        let mut prev: Option<(f64, f64, f64)> = None;
        for i in 1..n {
            let x = 2.0 * i as f64 / n as f64;
            let (sp, sm) = (self.s_plus(x, c), self.s_minus(x, c));
            if !(sp.is_finite() && sp > 0.0 && sm.is_finite() && sm > 0.0) {
                return Err(Error::domain(format!(
                    "profile sizes must be positive and finite: s+({x}, {c}) = {sp}, s-({x}, {c}) = {sm}"
                )));
            }
            if let Some((px, psp, psm)) = prev {
                if px >= 0.05 && x <= 1.95 {
                    let q = ((sp - psp).abs()).max((sm - psm).abs()) / (x - px);
                    lipschitz = lipschitz.max(q);
                }
            }
            prev = Some((x, sp, sm));
        }
        if !lipschitz.is_finite() {
            return Err(Error::domain("profile sizes are not Lipschitz on [0.05, 1.95]"));
        }
        Ok(lipschitz)
    }
}
