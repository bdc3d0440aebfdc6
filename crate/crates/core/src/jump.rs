//! Exact simulation of the competition process `X_t` (twice the red harmonic
//! measure) and quadrature of its jump-kernel moments.
//!
//! By rotational symmetry only the interface-relative angle
//! `theta' = Z(1) - theta`, uniform on `[0, 2)`, matters. A particle landing at
//! `theta' < x` is red and has capacity `c s+(x, c)`, otherwise blue with
//! `c s-(x, c)`, and the jump is `g(theta') - g(theta' - x)` with `g` the
//! angle displacement for that capacity.

use std::f64::consts::PI;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::SizeProfile;
use crate::quadrature::Quadrature;
use crate::rng::{draw_event, seeded};
use crate::slit_map::gamma_tilde_raw;

/// States within this distance of 0 or 2 are treated as absorbed.
pub const DEFAULT_ABSORPTION_EPS: f64 = 1e-12;

/// Frozen constant `A` in the jump bound `|dx| <= A sqrt(c max(s+, s-))`.
/// The displacement never exceeds `gamma_tilde(0+)`, so jumps are at most
/// `(4/pi) atan sqrt(e^{cs} - 1)`, close to `1.27 sqrt(cs)`; 4 leaves margin.
pub const JUMP_BOUND_A: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpState {
    pub t: f64,
    pub x: f64,
    pub n: u64,
}

impl JumpState {
    pub fn initial() -> Self {
        Self { t: 0.0, x: 1.0, n: 0 }
    }

    pub fn is_absorbed(&self) -> bool {
        self.x == 0.0 || self.x == 2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jump {
    pub wait: f64,
    pub theta_prime: f64,
    pub red: bool,
    pub capacity: f64,
    pub dx: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepOutcome {
    Moved { state: JumpState, jump: Jump },
    /// The input was already absorbed; nothing was drawn.
    Absorbing(JumpState),
}

/// Capacity and jump for a particle at interface-relative angle `theta_prime`
/// when the red measure is `x`.
#[inline]
pub fn jump_at(profile: &SizeProfile, c: f64, x: f64, theta_prime: f64) -> Result<(bool, f64, f64)> {
    let red = theta_prime < x;
    let s = if red { profile.s_plus(x, c) } else { profile.s_minus(x, c) };
    let cap = c * s;
    if !(cap.is_finite() && cap > 0.0) {
        return Err(Error::domain(format!(
            "profile produced capacity {cap} at x = {x} ({} particle)",
            if red { "red" } else { "blue" }
        )));
    }
    let dx = gamma_tilde_raw(cap, theta_prime) - gamma_tilde_raw(cap, theta_prime - x);
    Ok((red, cap, dx))
}

#[inline]
pub(crate) fn settle(x: f64, eps: f64) -> f64 {
    if x <= eps {
        0.0
    } else if x >= 2.0 - eps {
        2.0
    } else {
        x
    }
}

pub fn step<R: Rng + ?Sized>(state: &JumpState, profile: &SizeProfile, c: f64, rng: &mut R) -> Result<StepOutcome> {
    step_with_eps(state, profile, c, DEFAULT_ABSORPTION_EPS, rng)
}

pub fn step_with_eps<R: Rng + ?Sized>(
    state: &JumpState,
    profile: &SizeProfile,
    c: f64,
    eps: f64,
    rng: &mut R,
) -> Result<StepOutcome> {
    if !(0.0..=2.0).contains(&state.x) {
        return Err(Error::domain(format!("state x = {} outside [0, 2]", state.x)));
    }
    if state.is_absorbed() {
        return Ok(StepOutcome::Absorbing(*state));
    }
    let draw = draw_event(rng, profile.rate(c));
    let (red, capacity, dx) = jump_at(profile, c, state.x, draw.theta_prime)?;
    let next = JumpState {
        t: state.t + draw.wait,
        x: settle((state.x + dx).clamp(0.0, 2.0), eps),
        n: state.n + 1,
    };
    Ok(StepOutcome::Moved {
        state: next,
        jump: Jump {
            wait: draw.wait,
            theta_prime: draw.theta_prime,
            red,
            capacity,
            dx,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    /// Grid spacing for stored samples; `None` stores every event.
    pub sample_dt: Option<f64>,
    /// Keep the full `(t, x)` event log in addition to the grid samples.
    pub record_events: bool,
    pub absorption_eps: f64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            sample_dt: None,
            record_events: false,
            absorption_eps: DEFAULT_ABSORPTION_EPS,
        }
    }
}

impl SimulationOptions {
    pub fn sampled(dt: f64) -> Self {
        Self {
            sample_dt: Some(dt),
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Zero,
    Two,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub profile: SizeProfile,
    pub c: f64,
    pub t_max: f64,
    pub seed: u64,
    pub stream: u64,
    pub options: SimulationOptions,
    pub n_events: u64,
    pub absorbed_at: Option<f64>,
    pub absorbed_side: Option<Side>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<Vec<Sample>>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn final_x(&self) -> f64 {
        self.samples.last().map_or(1.0, |s| s.x)
    }

    /// Value at time `t`: the last stored sample at or before `t`. Exact on the sampling grid.
    pub fn value_at(&self, t: f64) -> f64 {
        let idx = self.samples.partition_point(|s| s.t <= t);
        self.samples[idx.saturating_sub(1)].x
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(w, "t,x")?;
        for s in &self.samples {
            writeln!(w, "{},{}", s.t, s.x)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_sidecar(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.meta)?;
        fs::write(path, json + "\n")?;
        Ok(())
    }
}

/// Runs one trajectory from `(0, 1)` until `t_max` or absorption.
pub fn simulate(profile: &SizeProfile, c: f64, t_max: f64, seed: u64, options: &SimulationOptions) -> Result<Trajectory> {
    simulate_stream(profile, c, t_max, seed, 0, options)
}

pub fn simulate_stream(
    profile: &SizeProfile,
    c: f64,
    t_max: f64,
    seed: u64,
    stream: u64,
    options: &SimulationOptions,
) -> Result<Trajectory> {
    if !(t_max.is_finite() && t_max >= 0.0) {
        return Err(Error::Parameter(format!("t_max must be finite and non-negative, got {t_max}")));
    }
    if let Some(dt) = options.sample_dt {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Parameter(format!("sampling interval must be positive, got {dt}")));
        }
    }
    if !(options.absorption_eps >= 0.0 && options.absorption_eps < 1.0) {
        return Err(Error::Parameter("absorption threshold must lie in [0, 1)".into()));
    }
    profile.validate(c)?;
    let rate = profile.rate(c);
    let eps = options.absorption_eps;
    let mut rng = seeded(seed, stream);

    let mut samples = vec![Sample { t: 0.0, x: 1.0 }];
    let mut events = options.record_events.then(|| vec![Sample { t: 0.0, x: 1.0 }]);
    let mut next_grid = 1u64;
    let grid_time = |k: u64| options.sample_dt.map(|dt| k as f64 * dt);

    let (mut t, mut x, mut n) = (0.0_f64, 1.0_f64, 0u64);
    let mut absorbed_at = None;
    loop {
        let draw = draw_event(&mut rng, rate);
        let t_next = t + draw.wait;
        if t_next > t_max {
            break;
        }
        if options.sample_dt.is_some() {
            while let Some(g) = grid_time(next_grid).filter(|&g| g < t_next && g <= t_max) {
                samples.push(Sample { t: g, x });
                next_grid += 1;
            }
        }
        let (_, _, dx) = jump_at(profile, c, x, draw.theta_prime)?;
        x = settle((x + dx).clamp(0.0, 2.0), eps);
        t = t_next;
        n += 1;
        if let Some(ev) = events.as_mut() {
            ev.push(Sample { t, x });
        }
        let absorbed = x == 0.0 || x == 2.0;
        if options.sample_dt.is_none() || (absorbed && grid_time(next_grid) != Some(t)) {
            samples.push(Sample { t, x });
        }
        if absorbed {
            absorbed_at = Some(t);
            break;
        }
    }
    if options.sample_dt.is_some() {
        while let Some(g) = grid_time(next_grid).filter(|&g| g <= t_max) {
            samples.push(Sample { t: g, x });
            next_grid += 1;
        }
    }
    let absorbed_side = absorbed_at.map(|_| if x == 0.0 { Side::Zero } else { Side::Two });
    Ok(Trajectory {
        samples,
        events,
        meta: TrajectoryMeta {
            profile: profile.clone(),
            c,
            t_max,
            seed,
            stream,
            options: options.clone(),
            n_events: n,
            absorbed_at,
            absorbed_side,
        },
    })
}

/// Independent trajectories on streams `0..n` of one seed, run in parallel.
/// The output order (and content) does not depend on the thread count.
pub fn simulate_ensemble(
    profile: &SizeProfile,
    c: f64,
    t_max: f64,
    seed: u64,
    n: usize,
    options: &SimulationOptions,
) -> Result<Vec<Trajectory>> {
    (0..n as u64)
        .into_par_iter()
        .map(|stream| simulate_stream(profile, c, t_max, seed, stream, options))
        .collect()
}

fn kernel_breaks(lo: f64, hi: f64, features: &[f64], scale: f64) -> Vec<f64> {
    let mut pts = vec![lo, hi];
    for &p in features {
        if p > lo && p < hi {
            pts.push(p);
        }
        let mut off = 1e-3 * scale;
        while off < hi - lo {
            for q in [p - off, p + off] {
                if q > lo && q < hi {
                    pts.push(q);
                }
            }
            off *= 4.0;
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

fn check_interior(x: f64) -> Result<()> {
    if x > 0.0 && x < 2.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("kernel moments need x in (0, 2), got {x}")))
    }
}

/// Infinitesimal mean `b^c(x)`: `r(c) * int_0^x (g+(u) - g-(u)) du`.
pub fn kernel_drift(profile: &SizeProfile, c: f64, x: f64) -> Result<f64> {
    check_interior(x)?;
    let (sp, sm) = (profile.s_plus(x, c), profile.s_minus(x, c));
    if sp == sm {
        return Ok(0.0);
    }
    let (cp, cm) = (c * sp, c * sm);
    let r = profile.rate(c);
    let quad = Quadrature::new(1e-10 * c, 1e-12);
    let breaks = kernel_breaks(0.0, x, &[0.0], cp.max(cm).sqrt());
    let res = quad.integrate_with_breaks(|u| gamma_tilde_raw(cp, u) - gamma_tilde_raw(cm, u), &breaks)?;
    Ok(r * res.value)
}

/// Infinitesimal variance `a^c(x)`: the second moment of the jump kernel per unit time.
pub fn kernel_variance(profile: &SizeProfile, c: f64, x: f64) -> Result<f64> {
    check_interior(x)?;
    let (cp, cm) = (c * profile.s_plus(x, c), c * profile.s_minus(x, c));
    let r = profile.rate(c);
    let quad = Quadrature::new(1e-14 * c, 1e-11);
    let sq = |cap: f64| move |th: f64| {
        let d = gamma_tilde_raw(cap, th) - gamma_tilde_raw(cap, th - x);
        d * d
    };
    let red = quad.integrate_with_breaks(sq(cp), &kernel_breaks(0.0, x, &[0.0, x], cp.sqrt()))?;
    let blue = quad.integrate_with_breaks(sq(cm), &kernel_breaks(x, 2.0, &[x, 2.0], cm.sqrt()))?;
    Ok(0.5 * r * (red.value + blue.value))
}

/// Leading-order small-`c` form of `b^c(x)`, including the `s log s` correction.
pub fn asymptotic_drift(profile: &SizeProfile, c: f64, x: f64) -> f64 {
    let (sp, sm) = (profile.s_plus(x, c), profile.s_minus(x, c));
    if sp == sm {
        return 0.0;
    }
    let log_term = (1.0 / c).ln() + 2.0 * (0.5 * PI * x).sin().ln() + 1.0 + 2.0 * 2f64.ln();
    let pi2 = PI * PI;
    c * profile.rate(c) * ((sp - sm) * log_term / pi2 - (sp * sp.ln() - sm * sm.ln()) / pi2)
}

/// Leading-order small-`c` form of `a^c(x)`.
pub fn asymptotic_variance(profile: &SizeProfile, c: f64, x: f64) -> f64 {
    let (sp, sm) = (profile.s_plus(x, c), profile.s_minus(x, c));
    16.0 / (3.0 * PI.powi(3)) * c.powf(1.5) * profile.rate(c) * (sp.powf(1.5) + sm.powf(1.5))
}
