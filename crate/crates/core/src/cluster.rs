//! The conformal cluster behind the competition process.
//!
//! Particles are stored in arrival order with their attachment angle in the
//! pre-image disk. The interface points `Z(0)` and `Z(1)` are pushed through
//! each particle's angle map as it arrives, so `Z(1) - Z(0)` is the red
//! harmonic measure (times two) without ever evaluating the full map.
//! Geometry is produced on demand by composing slit maps.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jump::{settle, DEFAULT_ABSORPTION_EPS};
use crate::profile::SizeProfile;
use crate::rng::{draw_event, seeded};
use crate::slit_map::{gamma_tilde_raw, slit_length_raw, slit_map_raw, AngleHT, Capacity, ComplexPoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Colour {
    Red,
    Blue,
}

impl Colour {
    pub fn as_str(self) -> &'static str {
        match self {
            Colour::Red => "red",
            Colour::Blue => "blue",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub theta: AngleHT,
    pub capacity: Capacity,
    pub colour: Colour,
    pub index: usize,
    pub arrival_time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrowthLimit {
    Particles(usize),
    Time(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    pub profile: SizeProfile,
    pub c: f64,
    pub seed: u64,
    pub stream: u64,
    pub limit: GrowthLimit,
    pub particles: Vec<Particle>,
    /// Current images of the interface points 0 and 1 (not reduced mod 2).
    pub z0: f64,
    pub z1: f64,
    pub t: f64,
    /// Harmonic state after each arrival.
    pub trace: Vec<f64>,
    /// Frozen harmonic state once one colour has taken over.
    pub absorbed: Option<f64>,
}

impl ClusterState {
    pub fn empty(profile: SizeProfile, c: f64, seed: u64, stream: u64, limit: GrowthLimit) -> Self {
        Self {
            profile,
            c,
            seed,
            stream,
            limit,
            particles: Vec::new(),
            z0: 0.0,
            z1: 1.0,
            t: 0.0,
            trace: Vec::new(),
            absorbed: None,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Twice the red harmonic measure, `Z(1) - Z(0)` clamped to `[0, 2]`.
pub fn harmonic_state(cluster: &ClusterState) -> f64 {
    cluster.absorbed.unwrap_or_else(|| (cluster.z1 - cluster.z0).clamp(0.0, 2.0))
}

/// Grows a two-colour cluster, drawing events in the same order as the jump
/// process so that equal seeds give equal harmonic-state traces.
pub fn grow(profile: &SizeProfile, c: f64, limit: GrowthLimit, seed: u64) -> Result<ClusterState> {
    grow_stream(profile, c, limit, seed, 0)
}

pub fn grow_stream(profile: &SizeProfile, c: f64, limit: GrowthLimit, seed: u64, stream: u64) -> Result<ClusterState> {
    if let GrowthLimit::Time(t) = limit {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::Parameter(format!("t_max must be finite and non-negative, got {t}")));
        }
    }
    profile.validate(c)?;
    let rate = profile.rate(c);
    let eps = DEFAULT_ABSORPTION_EPS;
    let mut rng = seeded(seed, stream);
    let mut state = ClusterState::empty(profile.clone(), c, seed, stream, limit);
    loop {
        if let GrowthLimit::Particles(n) = limit {
            if state.particles.len() >= n {
                break;
            }
        }
        let draw = draw_event(&mut rng, rate);
        let t_next = state.t + draw.wait;
        if let GrowthLimit::Time(t_max) = limit {
            if t_next > t_max {
                state.t = t_max;
                break;
            }
        }
        let x = harmonic_state(&state);
        // theta' = Z(1) - theta, so the particle sits at theta = Z(1) - theta'.
        // It lands on the red arc (Z(0), Z(1)) exactly when theta' < x.
        let theta = state.z1 - draw.theta_prime;
        let colour = if draw.theta_prime < x { Colour::Red } else { Colour::Blue };
        let x_eval = x.clamp(eps, 2.0 - eps);
        let size = match colour {
            Colour::Red => profile.s_plus(x_eval, c),
            Colour::Blue => profile.s_minus(x_eval, c),
        };
        let capacity = Capacity::new(c * size)?;
        let cap = capacity.get();
        state.z1 += gamma_tilde_raw(cap, state.z1 - theta);
        state.z0 += gamma_tilde_raw(cap, state.z0 - theta);
        state.t = t_next;
        state.particles.push(Particle {
            theta: AngleHT::new(theta)?,
            capacity,
            colour,
            index: state.particles.len(),
            arrival_time: t_next,
        });
        if state.absorbed.is_none() {
            let x_new = settle((state.z1 - state.z0).clamp(0.0, 2.0), eps);
            if x_new == 0.0 || x_new == 2.0 {
                state.absorbed = Some(x_new);
            }
        }
        state.trace.push(harmonic_state(&state));
    }
    Ok(state)
}

/// `Phi(z) = f_1 o f_2 o ... o f_n (z)` over the first `upto_n` particles; the
/// newest particle's map is applied first.
pub fn evaluate_map(cluster: &ClusterState, upto_n: usize, z: ComplexPoint) -> Result<ComplexPoint> {
    if upto_n > cluster.particles.len() {
        return Err(Error::Parameter(format!(
            "cluster has {} particles, asked for {upto_n}",
            cluster.particles.len()
        )));
    }
    let z = match z {
        ComplexPoint::Infinity => return Ok(ComplexPoint::Infinity),
        ComplexPoint::Finite(z) => z,
    };
    if !(z.re.is_finite() && z.im.is_finite()) || z.norm() < 1.0 - 1e-12 {
        return Err(Error::domain(format!("map is defined for |z| >= 1, got {z}")));
    }
    let rotations: Vec<Complex64> = cluster.particles[..upto_n].iter().map(|p| p.theta.boundary_point()).collect();
    Ok(ComplexPoint::Finite(compose(&cluster.particles[..upto_n], &rotations, z)))
}

#[inline]
fn compose(particles: &[Particle], rotations: &[Complex64], mut z: Complex64) -> Complex64 {
    for (p, rot) in particles.iter().zip(rotations).rev() {
        z = rot * slit_map_raw(p.capacity.get(), rot.conj() * z);
    }
    z
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolylineKind {
    Base,
    Particle { index: usize, colour: Colour },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub kind: PolylineKind,
    pub points: Vec<Complex64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterGeometry {
    pub polylines: Vec<Polyline>,
}

const BASE_SEGMENTS: usize = 720;

/// Radial parameters in `[1, 1 + d]`: the base point first, then offsets
/// spaced geometrically from `1e-3 d` up to `d`.
fn lambda_samples(d: f64, samples: usize) -> Vec<f64> {
    if samples == 2 {
        return vec![1.0, 1.0 + d];
    }
    let steps = (samples - 2) as f64;
    let ratio = 1e-3_f64.powf(1.0 / steps);
    let mut out = Vec::with_capacity(samples);
    out.push(1.0);
    for j in 0..samples - 1 {
        out.push(1.0 + d * ratio.powi((samples - 2 - j) as i32));
    }
    out
}

/// Particle polylines (each mapped through the cluster map at its arrival
/// time) plus the unit circle.
pub fn render(cluster: &ClusterState, samples_per_particle: usize) -> Result<ClusterGeometry> {
    render_from(cluster, samples_per_particle, 0)
}

/// As [`render`], skipping particles with index below `first`.
pub fn render_from(cluster: &ClusterState, samples_per_particle: usize, first: usize) -> Result<ClusterGeometry> {
    if samples_per_particle < 2 {
        return Err(Error::Parameter("need at least two samples per particle".into()));
    }
    let rotations: Vec<Complex64> = cluster.particles.iter().map(|p| p.theta.boundary_point()).collect();
    let base = Polyline {
        kind: PolylineKind::Base,
        points: (0..=BASE_SEGMENTS)
            .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / BASE_SEGMENTS as f64))
            .collect(),
    };
    let first = first.min(cluster.particles.len());
    let particles: Vec<Polyline> = (first..cluster.particles.len())
        .into_par_iter()
        .map(|k| {
            let p = &cluster.particles[k];
            let d = slit_length_raw(p.capacity.get());
            let dir = rotations[k];
            let points = lambda_samples(d, samples_per_particle)
                .into_iter()
                .map(|lambda| compose(&cluster.particles[..k], &rotations[..k], dir * lambda))
                .collect();
            Polyline {
                kind: PolylineKind::Particle {
                    index: p.index,
                    colour: p.colour,
                },
                points,
            }
        })
        .collect();
    let mut polylines = Vec::with_capacity(particles.len() + 1);
    polylines.push(base);
    polylines.extend(particles);
    Ok(ClusterGeometry { polylines })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvgOptions {
    pub stroke_width: f64,
    pub size_px: u32,
    pub red: String,
    pub blue: String,
}

impl Default for SvgOptions {
    fn default() -> Self {
        Self {
            stroke_width: 0.004,
            size_px: 800,
            red: "#d62728".into(),
            blue: "#1f77b4".into(),
        }
    }
}

impl ClusterGeometry {
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for z in self.polylines.iter().flat_map(|p| &p.points) {
            b.0 = b.0.min(z.re);
            b.1 = b.1.min(z.im);
            b.2 = b.2.max(z.re);
            b.3 = b.3.max(z.im);
        }
        b
    }

    /// SVG with the y axis pointing up. Coordinates are written with fixed
    /// precision so equal geometry gives equal bytes.
    pub fn to_svg(&self, opts: &SvgOptions) -> String {
        let (x0, y0, x1, y1) = self.bounds();
        let pad = 0.05 * (x1 - x0).max(y1 - y0);
        let (vx, vy, vw, vh) = (x0 - pad, -(y1 + pad), x1 - x0 + 2.0 * pad, y1 - y0 + 2.0 * pad);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{px}" height="{px}" viewBox="{vx:.6} {vy:.6} {vw:.6} {vh:.6}">"#,
            px = opts.size_px
        );
        let _ = writeln!(
            s,
            r#"<g transform="scale(1,-1)" fill="none" stroke-width="{:.6}" stroke-linecap="round" stroke-linejoin="round">"#,
            opts.stroke_width
        );
        for line in &self.polylines {
            let stroke = match line.kind {
                PolylineKind::Base => "#000000",
                PolylineKind::Particle { colour: Colour::Red, .. } => &opts.red,
                PolylineKind::Particle { colour: Colour::Blue, .. } => &opts.blue,
            };
            let mut d = String::new();
            for (i, z) in line.points.iter().enumerate() {
                let _ = write!(d, "{}{:.6} {:.6}", if i == 0 { "M" } else { " L" }, z.re, z.im);
            }
            let _ = writeln!(s, r#"<path stroke="{stroke}" d="{d}"/>"#);
        }
        s.push_str("</g>\n</svg>\n");
        s
    }

    /// Flat CSV: `particle_index,colour,point_index,re,im`. The unit circle has
    /// index -1 and colour `base`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("particle_index,colour,point_index,re,im\n");
        for line in &self.polylines {
            let (idx, colour) = match line.kind {
                PolylineKind::Base => (-1i64, "base"),
                PolylineKind::Particle { index, colour } => (index as i64, colour.as_str()),
            };
            for (i, z) in line.points.iter().enumerate() {
                let _ = writeln!(s, "{idx},{colour},{i},{},{}", z.re, z.im);
            }
        }
        s
    }
}
