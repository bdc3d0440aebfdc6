//! Small-particle limits of the competition process and their one-dimensional
//! diffusion theory: scale function, speed density, boundary behaviour,
//! stationary law and the quadratic Lyapunov condition.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::jump::{Sample, Side};
use crate::profile::{RateSchedule, SizeProfile};
use crate::quadrature::Quadrature;
use crate::rng::seeded;

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Which small-particle limit a spec represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdeMode {
    /// Deterministic ODE, `a = 0`.
    Ode,
    /// Martingale diffusion, `b = 0`.
    Driftless,
    Full,
}

/// `dX = b(X) dt + sqrt(a(X)) dB` on `(0, 2)`.
#[derive(Clone)]
pub struct SdeSpec {
    drift: RealFn,
    variance: RealFn,
    mode: SdeMode,
    label: String,
}

impl fmt::Debug for SdeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeSpec").field("label", &self.label).field("mode", &self.mode).finish()
    }
}

fn check_grid() -> impl Iterator<Item = f64> {
    let interior = (1..400).map(|i| i as f64 / 200.0);
    let near = (4..=40).flat_map(|k| {
        let h = 0.5_f64.powi(k);
        [h, 2.0 - h]
    });
    interior.chain(near)
}

impl SdeSpec {
    /// Builds a spec, checking on a grid that `a >= 0`, that `a > 0` unless the
    /// mode is `Ode`, that `b = 0` in `Driftless` mode, and that `b / a` is finite.
    pub fn new(mode: SdeMode, drift: RealFn, variance: RealFn, label: impl Into<String>) -> Result<Self> {
        let spec = Self {
            drift,
            variance,
            mode,
            label: label.into(),
        };
        for x in check_grid() {
            let (b, a) = (spec.drift(x), spec.variance(x));
            if !b.is_finite() || !a.is_finite() {
                return Err(Error::Specification(format!("coefficients not finite at x = {x}: b = {b}, a = {a}")));
            }
            match mode {
                SdeMode::Ode if a != 0.0 => {
                    return Err(Error::Specification(format!("ODE spec has a({x}) = {a}")));
                }
                SdeMode::Driftless if b != 0.0 => {
                    return Err(Error::Specification(format!("driftless spec has b({x}) = {b}")));
                }
                SdeMode::Driftless | SdeMode::Full if a <= 0.0 => {
                    return Err(Error::Specification(format!("variance must be positive on (0, 2), a({x}) = {a}")));
                }
                SdeMode::Driftless | SdeMode::Full if !(b / a).is_finite() => {
                    return Err(Error::Specification(format!("b/a is not finite at x = {x}")));
                }
                _ => {}
            }
        }
        Ok(spec)
    }

    pub fn from_fns(
        mode: SdeMode,
        drift: impl Fn(f64) -> f64 + Send + Sync + 'static,
        variance: impl Fn(f64) -> f64 + Send + Sync + 'static,
        label: impl Into<String>,
    ) -> Result<Self> {
        Self::new(mode, Arc::new(drift), Arc::new(variance), label)
    }

    /// Spec from expressions in `x`. The mode is inferred: `a = 0` on the
    /// check grid gives an ODE, `b = 0` a driftless diffusion.
    pub fn from_exprs(drift: &Expr, variance: &Expr) -> Result<Self> {
        for e in [drift, variance] {
            if e.depends_on_c() {
                return Err(Error::Specification(format!("limit coefficient `{e}` must not depend on c")));
            }
        }
        let zero = |e: &Expr| check_grid().all(|x| e.eval(x, 0.0) == 0.0);
        let mode = if zero(variance) {
            SdeMode::Ode
        } else if zero(drift) {
            SdeMode::Driftless
        } else {
            SdeMode::Full
        };
        let label = format!("b(x) = {drift}, a(x) = {variance}");
        let (b, a) = (drift.clone(), variance.clone());
        Self::from_fns(mode, move |x| b.eval(x, 0.0), move |x| a.eval(x, 0.0), label)
    }

    pub fn drift(&self, x: f64) -> f64 {
        (self.drift)(x)
    }

    pub fn variance(&self, x: f64) -> f64 {
        (self.variance)(x)
    }

    pub fn mode(&self) -> SdeMode {
        self.mode
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// HL(0) variance constant `32 / (3 pi^3)`.
pub fn hl0_variance() -> f64 {
    32.0 / (3.0 * PI.powi(3))
}

/// The limit of the competition process under the profile's rate schedule.
///
/// With rate `(c log(1/c))^-1` the limit is the ODE `dX = (s+ - s-)(X) / pi^2 dt`.
/// With rate `c^{-3/2}` the sizes must agree in the limit and the diffusion has
/// `b = h / pi^2`, `a = 32 s^{3/2} / (3 pi^3)`.
pub fn limit_spec(profile: &SizeProfile) -> Result<SdeSpec> {
    let p = Arc::new(profile.clone());
    let need = |x: f64| -> Result<(f64, f64)> {
        match (p.s_plus_limit(x), p.s_minus_limit(x)) {
            (Some(sp), Some(sm)) => Ok((sp, sm)),
            _ => Err(Error::Specification(format!("profile `{}` declares no limiting sizes", p.name()))),
        }
    };
    match profile.rate {
        RateSchedule::Ballistic => {
            need(1.0)?;
            let q = p.clone();
            SdeSpec::from_fns(
                SdeMode::Ode,
                move |x| (q.s_plus_limit(x).unwrap() - q.s_minus_limit(x).unwrap()) / (PI * PI),
                |_| 0.0,
                format!("{} ODE limit", p.name()),
            )
        }
        RateSchedule::Diffusive => {
            let mut driftless = true;
            for x in check_grid() {
                let (sp, sm) = need(x)?;
                if (sp - sm).abs() > 1e-12 * sp.abs().max(sm.abs()).max(1.0) {
                    return Err(Error::Specification(format!(
                        "rate c^(-3/2) needs equal limiting sizes, got s+({x}) = {sp}, s-({x}) = {sm}"
                    )));
                }
                let h = p
                    .h(x)
                    .ok_or_else(|| Error::Specification(format!("profile `{}` declares no tilt h", p.name())))?;
                driftless &= h == 0.0;
            }
            let k = hl0_variance();
            let (qa, qb) = (p.clone(), p.clone());
            let variance = move |x: f64| k * qa.s_plus_limit(x).unwrap().powf(1.5);
            let label = format!("{} diffusion limit", p.name());
            if driftless {
                SdeSpec::from_fns(SdeMode::Driftless, |_| 0.0, variance, label)
            } else {
                SdeSpec::from_fns(SdeMode::Full, move |x| qb.h(x).unwrap() / (PI * PI), variance, label)
            }
        }
        RateSchedule::Custom(ref e) => Err(Error::Specification(format!(
            "no limit is known for the custom rate `{e}`"
        ))),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryPolicy {
    /// Stop at the first step that leaves `(0, 2)`.
    #[default]
    Absorb,
    /// Fold steps that leave `(0, 2)` back inside. Only meaningful when both
    /// boundaries are inaccessible to the exact process.
    Reflect,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrateOptions {
    pub boundary: BoundaryPolicy,
    /// Spacing of stored samples; `None` keeps only the endpoints.
    pub record_dt: Option<f64>,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            boundary: BoundaryPolicy::Absorb,
            record_dt: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdePath {
    pub samples: Vec<Sample>,
    /// Exit time and side when the path left `(0, 2)`.
    pub tau: Option<f64>,
    pub exit_side: Option<Side>,
    pub steps: u64,
}

impl SdePath {
    pub fn final_x(&self) -> f64 {
        self.samples.last().map_or(f64::NAN, |s| s.x)
    }
}

fn fold_into_interval(x: f64) -> f64 {
    let y = x.rem_euclid(4.0);
    let y = if y > 2.0 { 4.0 - y } else { y };
    // Land strictly inside; a fold onto an endpoint is nudged by one ulp.
    if y <= 0.0 {
        f64::MIN_POSITIVE
    } else if y >= 2.0 {
        2.0 - f64::EPSILON
    } else {
        y
    }
}

/// Euler-Maruyama (RK4 in ODE mode) from `x0` up to `t_max`. The final step is
/// shortened to land on `t_max`.
pub fn integrate(spec: &SdeSpec, x0: f64, dt: f64, t_max: f64, seed: u64, opts: &IntegrateOptions) -> Result<SdePath> {
    integrate_stream(spec, x0, dt, t_max, seed, 0, opts)
}

pub fn integrate_stream(
    spec: &SdeSpec,
    x0: f64,
    dt: f64,
    t_max: f64,
    seed: u64,
    stream: u64,
    opts: &IntegrateOptions,
) -> Result<SdePath> {
    if !(x0 > 0.0 && x0 < 2.0) {
        return Err(Error::Parameter(format!("x0 must lie in (0, 2), got {x0}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Parameter(format!("dt must be positive, got {dt}")));
    }
    if !(t_max.is_finite() && dt < t_max) {
        return Err(Error::Parameter(format!("need dt < t_max, got dt = {dt}, t_max = {t_max}")));
    }
    let record_every = match opts.record_dt {
        None => u64::MAX,
        Some(r) if r > 0.0 && r.is_finite() => ((r / dt).round() as u64).max(1),
        Some(r) => return Err(Error::Parameter(format!("record_dt must be positive, got {r}"))),
    };
    let n_steps = (t_max / dt - 1e-9).ceil() as u64;
    let mut rng = seeded(seed, stream);
    let mut x = x0;
    let mut samples = vec![Sample { t: 0.0, x }];
    let (mut tau, mut exit_side) = (None, None);
    for k in 1..=n_steps {
        let t = if k == n_steps { t_max } else { k as f64 * dt };
        let h = t - (k - 1) as f64 * dt;
        let next = if spec.mode == SdeMode::Ode {
            let b = |y| spec.drift(y);
            let k1 = b(x);
            let k2 = b(x + 0.5 * h * k1);
            let k3 = b(x + 0.5 * h * k2);
            let k4 = b(x + h * k3);
            x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        } else {
            let z: f64 = StandardNormal.sample(&mut rng);
            x + spec.drift(x) * h + (spec.variance(x).max(0.0) * h).sqrt() * z
        };
        if next > 0.0 && next < 2.0 {
            x = next;
        } else if opts.boundary == BoundaryPolicy::Reflect && next.is_finite() {
            x = fold_into_interval(next);
        } else {
            let side = if next >= 2.0 { Side::Two } else { Side::Zero };
            x = if side == Side::Two { 2.0 } else { 0.0 };
            tau = Some(t);
            exit_side = Some(side);
            samples.push(Sample { t, x });
            return Ok(SdePath {
                samples,
                tau,
                exit_side,
                steps: k,
            });
        }
        if k % record_every == 0 || k == n_steps {
            samples.push(Sample { t, x });
        }
    }
    Ok(SdePath {
        samples,
        tau,
        exit_side,
        steps: n_steps,
    })
}

/// Independent paths on streams `0..n` of one seed.
pub fn integrate_ensemble(
    spec: &SdeSpec,
    x0: f64,
    dt: f64,
    t_max: f64,
    seed: u64,
    n: usize,
    opts: &IntegrateOptions,
) -> Result<Vec<SdePath>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| integrate_stream(spec, x0, dt, t_max, seed, i, opts))
        .collect()
}

#[inline]
fn x_of_u(u: f64) -> f64 {
    2.0 / (1.0 + (-u).exp())
}

#[inline]
fn u_of_x(x: f64) -> f64 {
    (x / (2.0 - x)).ln()
}

/// `dx/du = x (2 - x) / 2` under `u = log(x / (2 - x))`, evaluated without cancellation.
#[inline]
fn jacobian(u: f64) -> f64 {
    2.0 / ((1.0 + (-u).exp()) * (1.0 + u.exp()))
}

/// Quadrature helpers on the `u = log(x/(2-x))` scale, where linearly
/// vanishing variances become smooth exponential tails.
struct ScaleSpeed<'a> {
    spec: &'a SdeSpec,
}

/// Quadrature for integrands evaluated within `h` of a boundary. Nodes there
/// carry a rounding error of about `eps / h` relative to `h`, which bounds the
/// attainable relative accuracy.
fn quad_near(h: f64) -> Quadrature {
    Quadrature::new(1e-15, (64.0 * f64::EPSILON / h).max(1e-12))
}

impl<'a> ScaleSpeed<'a> {
    fn new(spec: &'a SdeSpec) -> Result<Self> {
        if spec.mode == SdeMode::Ode {
            return Err(Error::Precondition("scale and speed need a non-degenerate variance".into()));
        }
        Ok(Self { spec })
    }

    /// `2 b / a dx` expressed in `u`.
    fn psi_density(&self, u: f64) -> f64 {
        let x = x_of_u(u);
        2.0 * self.spec.drift(x) / self.spec.variance(x) * jacobian(u)
    }

    /// `psi(u1) - psi(u0)` where `psi = 2 int b/a`.
    fn psi_between(&self, u0: f64, u1: f64) -> Result<f64> {
        if u0 == u1 || self.spec.mode == SdeMode::Driftless {
            return Ok(0.0);
        }
        Ok(quad_near(boundary_distance(u0, u1)).integrate(|u| self.psi_density(u), u0, u1)?.value)
    }

    /// `int_{u0}^{u1} exp(-psi) dx` given `psi(u0)`.
    fn rho_between(&self, u0: f64, u1: f64, psi0: f64) -> Result<f64> {
        self.weighted_between(u0, u1, psi0, |psi, _| (-psi).exp())
    }

    /// `int_{u0}^{u1} m dx` given `psi(u0)`.
    fn mass_between(&self, u0: f64, u1: f64, psi0: f64) -> Result<f64> {
        self.weighted_between(u0, u1, psi0, |psi, x| psi.exp() / self.spec.variance(x))
    }

    fn weighted_between(&self, u0: f64, u1: f64, psi0: f64, w: impl Fn(f64, f64) -> f64) -> Result<f64> {
        let inner_err = RefCell::new(None);
        let res = quad_near(boundary_distance(u0, u1)).integrate(
            |u| match self.psi_between(u0, u) {
                Ok(dpsi) => w(psi0 + dpsi, x_of_u(u)) * jacobian(u),
                Err(e) => {
                    inner_err.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            },
            u0,
            u1,
        );
        if let Some(e) = inner_err.into_inner() {
            return Err(e);
        }
        Ok(res?.value)
    }
}

/// Smallest distance to `{0, 2}` over `x(u)` for `u` between `u0` and `u1`.
fn boundary_distance(u0: f64, u1: f64) -> f64 {
    let u = if u0.abs() > u1.abs() { u0 } else { u1 };
    // min(x, 2 - x) = 2 / (1 + e^|u|)
    2.0 / (1.0 + u.abs().exp())
}

fn check_open(x: f64) -> Result<()> {
    if x > 0.0 && x < 2.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("x must lie in (0, 2), got {x}")))
    }
}

/// `rho(x) = int_1^x exp(-2 int_1^y b/a) dy`.
pub fn scale_function(spec: &SdeSpec, x: f64) -> Result<f64> {
    check_open(x)?;
    ScaleSpeed::new(spec)?.rho_between(0.0, u_of_x(x), 0.0)
}

/// `m(x) = exp(2 int_1^x b/a) / a(x)`.
pub fn speed_density(spec: &SdeSpec, x: f64) -> Result<f64> {
    check_open(x)?;
    let ss = ScaleSpeed::new(spec)?;
    Ok(ss.psi_between(0.0, u_of_x(x))?.exp() / spec.variance(x))
}

/// A limit that may be infinite or that the numerics could not settle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtendedReal {
    Finite(f64),
    PosInfinity,
    NegInfinity,
    Undetermined,
}

impl ExtendedReal {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, ExtendedReal::PosInfinity | ExtendedReal::NegInfinity)
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedReal::Finite(v) => write!(f, "{v}"),
            ExtendedReal::PosInfinity => f.write_str("+inf"),
            ExtendedReal::NegInfinity => f.write_str("-inf"),
            ExtendedReal::Undetermined => f.write_str("undetermined"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    BothFinite,
    /// `rho(0) = -inf`, `rho(2)` finite: the process ends at 2.
    LeftInfinite,
    /// `rho(0)` finite, `rho(2) = +inf`: the process ends at 0.
    RightInfinite,
    BothInfiniteRecurrent,
    BothInfiniteNull,
    Undetermined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleSpeedReport {
    pub rho_at_0: ExtendedReal,
    pub rho_at_2: ExtendedReal,
    #[serde(rename = "M")]
    pub m_total: ExtendedReal,
    pub classification: Classification,
    pub hitting_prob_0: Option<f64>,
}

/// Deepest dyadic level `2^-k` probed toward each boundary.
pub const DYADIC_DEPTH: i32 = 30;
/// `|rho|` or `M` beyond this is treated as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

/// Limit of partial sums `s_k = s_0 + d_1 + ... + d_k` from the increments.
/// Increment ratios at or above 0.98 over the last five levels mean
/// divergence, ratios at or below 0.95 that agree to 0.05 mean geometric
/// convergence and are extrapolated; anything else is undetermined.
fn dyadic_limit(partial: f64, increments: &[f64], failed: bool, sign: f64) -> ExtendedReal {
    let inf = if sign > 0.0 { ExtendedReal::PosInfinity } else { ExtendedReal::NegInfinity };
    if partial.abs() > DIVERGENCE_THRESHOLD {
        return inf;
    }
    let Some(&last) = increments.last() else {
        return ExtendedReal::Undetermined;
    };
    if last.abs() <= 1e-15 * partial.abs().max(1.0) && !failed {
        return ExtendedReal::Finite(partial);
    }
    if increments.len() < 6 {
        return ExtendedReal::Undetermined;
    }
    let tail = &increments[increments.len() - 6..];
    let ratios: Vec<f64> = tail.windows(2).map(|w| w[1] / w[0]).collect();
    if ratios.iter().any(|q| !q.is_finite() || *q < 0.0) {
        return ExtendedReal::Undetermined;
    }
    if ratios.iter().all(|&q| q >= 0.98) {
        return inf;
    }
    if failed {
        return ExtendedReal::Undetermined;
    }
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &q| (lo.min(q), hi.max(q)));
    if hi <= 0.95 && hi - lo <= 0.05 {
        let q = *ratios.last().unwrap();
        return ExtendedReal::Finite(partial + last * q / (1.0 - q));
    }
    ExtendedReal::Undetermined
}

fn dyadic_u(side: Side, k: i32) -> f64 {
    let h = 0.5_f64.powi(k);
    match side {
        Side::Zero => u_of_x(h),
        // log((2 - h) / h), computed directly to avoid cancellation in 2 - x.
        Side::Two => ((2.0 - h) / h).ln(),
    }
}

/// Walks dyadic shells from `x = 1` toward one boundary, accumulating the
/// scale function and the speed mass shell by shell.
fn walk_to_boundary(ss: &ScaleSpeed<'_>, side: Side) -> (ExtendedReal, ExtendedReal) {
    // Shells toward 0 run backwards in u; flip them so the mass stays positive.
    let orient = if side == Side::Zero { -1.0 } else { 1.0 };
    let (mut rho, mut mass, mut psi, mut u) = (0.0_f64, 0.0_f64, 0.0, 0.0);
    let (mut drho, mut dmass) = (Vec::new(), Vec::new());
    let (mut rho_failed, mut mass_failed) = (false, false);
    for k in 1..=DYADIC_DEPTH {
        let u_next = dyadic_u(side, k);
        let dpsi = match ss.psi_between(u, u_next) {
            Ok(p) if p.is_finite() => p,
            _ => {
                rho_failed |= rho.abs() <= DIVERGENCE_THRESHOLD;
                mass_failed |= mass <= DIVERGENCE_THRESHOLD;
                break;
            }
        };
        if !rho_failed && rho.abs() <= DIVERGENCE_THRESHOLD {
            match ss.rho_between(u, u_next, psi) {
                Ok(r) if r.is_finite() => {
                    rho += r;
                    drho.push(r);
                }
                _ => rho_failed = true,
            }
        }
        if !mass_failed && mass <= DIVERGENCE_THRESHOLD {
            match ss.mass_between(u, u_next, psi) {
                Ok(m) if m.is_finite() => {
                    mass += orient * m;
                    dmass.push(orient * m);
                }
                _ => mass_failed = true,
            }
        }
        psi += dpsi;
        u = u_next;
    }
    (
        dyadic_limit(rho, &drho, rho_failed, orient),
        dyadic_limit(mass, &dmass, mass_failed, 1.0),
    )
}

/// Limits of the scale function at both ends, total speed mass, and the
/// resulting boundary classification.
pub fn classify_boundary(spec: &SdeSpec) -> Result<ScaleSpeedReport> {
    let ss = ScaleSpeed::new(spec)?;
    let (rho_at_0, mass_0) = walk_to_boundary(&ss, Side::Zero);
    let (rho_at_2, mass_2) = walk_to_boundary(&ss, Side::Two);
    let m_total = match (mass_0, mass_2) {
        (ExtendedReal::Finite(a), ExtendedReal::Finite(b)) => ExtendedReal::Finite(a + b),
        (ExtendedReal::PosInfinity, _) | (_, ExtendedReal::PosInfinity) => ExtendedReal::PosInfinity,
        _ => ExtendedReal::Undetermined,
    };
    use ExtendedReal::*;
    let classification = match (rho_at_0, rho_at_2) {
        (Finite(_), Finite(_)) => Classification::BothFinite,
        (NegInfinity, Finite(_)) => Classification::LeftInfinite,
        (Finite(_), PosInfinity) => Classification::RightInfinite,
        (NegInfinity, PosInfinity) => match m_total {
            Finite(_) => Classification::BothInfiniteRecurrent,
            PosInfinity => Classification::BothInfiniteNull,
            _ => Classification::Undetermined,
        },
        _ => Classification::Undetermined,
    };
    let hitting_prob_0 = match (classification, rho_at_0, rho_at_2) {
        (Classification::BothFinite, Finite(r0), Finite(r2)) => Some(r2 / (r2 - r0)),
        _ => None,
    };
    Ok(ScaleSpeedReport {
        rho_at_0,
        rho_at_2,
        m_total,
        classification,
        hitting_prob_0,
    })
}

/// `x -> m(x) / M` for a positive recurrent diffusion.
#[derive(Clone, Debug)]
pub struct StationaryDensity {
    spec: SdeSpec,
    m_total: f64,
}

impl StationaryDensity {
    pub fn total_mass(&self) -> f64 {
        self.m_total
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        Ok(speed_density(&self.spec, x)? / self.m_total)
    }
}

pub fn stationary_density(spec: &SdeSpec) -> Result<StationaryDensity> {
    let report = classify_boundary(spec)?;
    stationary_density_from(spec, &report)
}

pub fn stationary_density_from(spec: &SdeSpec, report: &ScaleSpeedReport) -> Result<StationaryDensity> {
    match (report.classification, report.m_total) {
        (Classification::BothInfiniteRecurrent, ExtendedReal::Finite(m_total)) => Ok(StationaryDensity {
            spec: spec.clone(),
            m_total,
        }),
        (c, _) => Err(Error::Precondition(format!(
            "a stationary law needs both boundaries inaccessible and finite speed mass, classification is {c:?}"
        ))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum LyapunovOutcome {
    /// `2(x-1) b + a <= -C (x-1)^2 + D` holds at every grid point with `C > D > 0`.
    Feasible {
        #[serde(rename = "C")]
        c: f64,
        #[serde(rename = "D")]
        d: f64,
        /// Smallest slack `-C (x-1)^2 + D - L(x)` over the grid.
        min_slack: f64,
    },
    Infeasible {
        /// Smallest admissible `C`, i.e. `max L(x) / (x (2 - x))`.
        c_lower_bound: f64,
        worst_x: f64,
    },
    InsufficientGrid {
        reason: String,
    },
}

/// Grid depth the Lyapunov check requires near each boundary.
pub const LYAPUNOV_MIN_DEPTH: i32 = 20;
/// Ratio bound past which `C` is declared unbounded.
pub const LYAPUNOV_C_MAX: f64 = 1e6;

/// Default grid: 1000 uniform interior points plus dyadic points down to `2^-30`
/// from each end.
pub fn lyapunov_grid() -> Vec<f64> {
    let mut g: Vec<f64> = (1..1000).map(|i| i as f64 / 500.0).collect();
    for k in 1..=DYADIC_DEPTH {
        let h = 0.5_f64.powi(k);
        g.push(h);
        g.push(2.0 - h);
    }
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// Searches for `C > D > 0` with `L(x) = 2(x-1) b + a <= -C (x-1)^2 + D` on the grid.
///
/// With `q = (x-1)^2` the constraint `max_i (L_i + C q_i) < C` is equivalent to
/// `C > L_i / (1 - q_i)` for every grid point, so feasibility reduces to that
/// ratio staying bounded as the grid approaches the boundary.
pub fn lyapunov_check(spec: &SdeSpec, grid: &[f64]) -> LyapunovOutcome {
    let insufficient = |reason: String| LyapunovOutcome::InsufficientGrid { reason };
    if grid.iter().any(|&x| !(x > 0.0 && x < 2.0)) {
        return insufficient("grid points must lie in (0, 2)".into());
    }
    let h = 0.5_f64.powi(LYAPUNOV_MIN_DEPTH);
    let lo = grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if grid.len() < 50 || lo > h || hi < 2.0 - h {
        return insufficient(format!(
            "need at least 50 points reaching within 2^-{LYAPUNOV_MIN_DEPTH} of both ends, got {} points on [{lo}, {hi}]",
            grid.len()
        ));
    }
    let lhs: Vec<f64> = grid.iter().map(|&x| 2.0 * (x - 1.0) * spec.drift(x) + spec.variance(x)).collect();
    let (mut c_min, mut worst_x) = (f64::NEG_INFINITY, f64::NAN);
    for (&x, &l) in grid.iter().zip(&lhs) {
        let ratio = l / (x * (2.0 - x));
        if ratio > c_min {
            c_min = ratio;
            worst_x = x;
        }
    }
    if !(c_min <= LYAPUNOV_C_MAX) {
        return LyapunovOutcome::Infeasible {
            c_lower_bound: c_min,
            worst_x,
        };
    }
    let c = 2.0 * c_min.max(0.0) + 1.0;
    let q = |x: f64| (x - 1.0) * (x - 1.0);
    let d_needed = grid.iter().zip(&lhs).map(|(&x, &l)| l + c * q(x)).fold(f64::NEG_INFINITY, f64::max);
    let d = if d_needed > 0.0 { d_needed } else { 0.5 * c };
    let min_slack = grid.iter().zip(&lhs).map(|(&x, &l)| -c * q(x) + d - l).fold(f64::INFINITY, f64::min);
    LyapunovOutcome::Feasible { c, d, min_slack }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub x: f64,
    pub stable: bool,
}

/// Zeros of the drift on `(0, 2)` by sign scan over `n` cells and bisection.
/// A zero is stable when the drift changes sign from positive to negative.
/// A drift vanishing on the whole scan has no isolated zeros and yields none.
pub fn fixed_points(spec: &SdeSpec, n: usize) -> Vec<FixedPoint> {
    let n = n.max(2);
    let xs: Vec<f64> = (1..n).map(|i| 2.0 * i as f64 / n as f64).collect();
    let bs: Vec<f64> = xs.iter().map(|&x| spec.drift(x)).collect();
    let mut out = Vec::new();
    if bs.iter().all(|&b| b == 0.0) {
        return out;
    }
    for i in 0..xs.len() {
        if bs[i] == 0.0 {
            let left = if i > 0 { bs[i - 1] } else { spec.drift(xs[i] / 2.0) };
            let right = bs.get(i + 1).copied().unwrap_or_else(|| spec.drift(xs[i] + (2.0 - xs[i]) / 2.0));
            out.push(FixedPoint {
                x: xs[i],
                stable: left > 0.0 && right < 0.0,
            });
            continue;
        }
        if i + 1 < xs.len() && bs[i + 1] != 0.0 && bs[i].signum() != bs[i + 1].signum() {
            let (mut a, mut b) = (xs[i], xs[i + 1]);
            let fa = bs[i];
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                if spec.drift(m).signum() == fa.signum() {
                    a = m;
                } else {
                    b = m;
                }
            }
            out.push(FixedPoint {
                x: 0.5 * (a + b),
                stable: fa > 0.0,
            });
        }
    }
    out
}

/// Everything `analyze` reports about a limit spec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub label: String,
    pub mode: SdeMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale_speed: Option<ScaleSpeedReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovOutcome>,
    pub fixed_points: Vec<FixedPoint>,
}

pub fn analyze(spec: &SdeSpec) -> Result<AnalysisReport> {
    let diffusive = spec.mode != SdeMode::Ode;
    Ok(AnalysisReport {
        label: spec.label.clone(),
        mode: spec.mode,
        scale_speed: if diffusive { Some(classify_boundary(spec)?) } else { None },
        lyapunov: if diffusive { Some(lyapunov_check(spec, &lyapunov_grid())) } else { None },
        fixed_points: fixed_points(spec, 2000),
    })
}
