use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hlcompete_core::cluster::{grow, render_from, ClusterState, GrowthLimit, SvgOptions};
use hlcompete_core::diffusion::{self, limit_spec, Classification, LyapunovOutcome, SdeSpec};
use hlcompete_core::experiments::{self, ExperimentConfig, Tolerance};
use hlcompete_core::expr::Expr;
use hlcompete_core::jump::{self, SimulationOptions};
use hlcompete_core::SizeProfile;

use crate::manifest::{now, ResolvedConfig, RunManifest};
use crate::{AnalyzeArgs, ClusterArgs, Failure, RenderArgs, RenderStyle, SimulateArgs};

fn finish(config: ResolvedConfig, started: f64, out: &Path, written: &[PathBuf]) -> Result<(), Failure> {
    let manifest = RunManifest::new(config, started, out, written).write()?;
    eprintln!("manifest: {}", manifest.display());
    Ok(())
}

pub fn simulate(mut a: SimulateArgs, root: &Path) -> Result<(), Failure> {
    let started = now();
    let profile = SizeProfile::builtin(&a.profile)?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| root.join(format!("simulate-{}-c{:e}-seed{}", profile.name(), a.c, a.seed)));
    a.out = Some(out.clone());
    let opts = if a.events {
        SimulationOptions::default()
    } else {
        SimulationOptions::sampled(a.sample_dt)
    };
    let tr = jump::simulate(&profile, a.c, a.t_max, a.seed, &opts)?;
    fs::create_dir_all(&out)?;
    let (csv, meta) = (out.join("trajectory.csv"), out.join("trajectory.json"));
    tr.write_csv(&csv)?;
    tr.write_sidecar(&meta)?;
    match tr.meta.absorbed_at {
        Some(t) => println!("{} events, absorbed at x = {} at t = {t}", tr.meta.n_events, tr.final_x()),
        None => println!("{} events, x({}) = {}", tr.meta.n_events, a.t_max, tr.final_x()),
    }
    finish(ResolvedConfig::Simulate(a), started, &out, &[csv, meta])
}

fn write_geometry(cluster: &ClusterState, style: &RenderStyle, out: &Path) -> Result<Vec<PathBuf>, Failure> {
    let geo = render_from(cluster, style.samples as usize, style.from)?;
    let opts = SvgOptions {
        stroke_width: style.stroke_width,
        size_px: style.size,
        ..SvgOptions::default()
    };
    fs::create_dir_all(out)?;
    let (svg, csv) = (out.join("cluster.svg"), out.join("cluster.csv"));
    fs::write(&svg, geo.to_svg(&opts))?;
    fs::write(&csv, geo.to_csv())?;
    Ok(vec![svg, csv])
}

pub fn cluster(mut a: ClusterArgs, root: &Path) -> Result<(), Failure> {
    let started = now();
    let profile = SizeProfile::builtin(&a.profile)?;
    let limit = match (a.n_particles, a.t_max) {
        (Some(n), _) => GrowthLimit::Particles(n),
        (None, Some(t)) => GrowthLimit::Time(t),
        (None, None) => return Err(Failure::Usage("one of --n-particles or --t-max is required".into())),
    };
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| root.join(format!("cluster-{}-c{:e}-seed{}", profile.name(), a.c, a.seed)));
    a.out = Some(out.clone());
    let cl = grow(&profile, a.c, limit, a.seed)?;
    fs::create_dir_all(&out)?;
    let state = out.join("cluster.json");
    cl.save(&state)?;
    let mut written = vec![state];
    written.extend(write_geometry(&cl, &a.style, &out)?);
    println!("{} particles, harmonic state {}", cl.particles.len(), hlcompete_core::cluster::harmonic_state(&cl));
    finish(ResolvedConfig::Cluster(a), started, &out, &written)
}

pub fn render(mut a: RenderArgs, root: &Path) -> Result<(), Failure> {
    let started = now();
    if !a.cluster.is_file() {
        return Err(Failure::Usage(format!("cluster file {} not found", a.cluster.display())));
    }
    a.cluster = a.cluster.canonicalize()?;
    let cl = ClusterState::load(&a.cluster)?;
    let stem = a.cluster.file_stem().map_or("cluster".into(), |s| s.to_string_lossy().into_owned());
    let out = a.out.clone().unwrap_or_else(|| root.join(format!("render-{stem}")));
    a.out = Some(out.clone());
    let written = write_geometry(&cl, &a.style, &out)?;
    finish(ResolvedConfig::Render(a), started, &out, &written)
}

pub fn analyze(a: AnalyzeArgs) -> Result<(), Failure> {
    let started = now();
    let spec = match (&a.profile, &a.drift, &a.variance) {
        (Some(p), _, _) => limit_spec(&SizeProfile::builtin(p)?)?,
        (None, Some(b), Some(v)) => SdeSpec::from_exprs(&Expr::parse_in_x(b)?, &Expr::parse_in_x(v)?)?,
        _ => return Err(Failure::Usage("give --profile or both --drift and --variance".into())),
    };
    let report = diffusion::analyze(&spec)?;
    let mut flags = Vec::new();
    if report.scale_speed.as_ref().is_some_and(|s| s.classification == Classification::Undetermined) {
        flags.push("classification-undetermined");
    }
    if matches!(report.lyapunov, Some(LyapunovOutcome::InsufficientGrid { .. })) {
        flags.push("lyapunov-grid-insufficient");
    }
    for f in &flags {
        eprintln!("warning: {f}");
    }
    let mut value = serde_json::to_value(&report)?;
    value["flags"] = serde_json::json!(flags);
    let text = serde_json::to_string_pretty(&value)? + "\n";
    // A closed pipe on stdout is not an error worth reporting.
    let _ = std::io::stdout().write_all(text.as_bytes());
    if let Some(out) = a.out.clone() {
        fs::create_dir_all(&out)?;
        let path = out.join("report.json");
        fs::write(&path, text)?;
        finish(ResolvedConfig::Analyze(a), started, &out, &[path])?;
    }
    Ok(())
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    let cfg = ExperimentConfig::load(path)?;
    cfg.validate()?;
    Ok(cfg)
}

fn num(v: f64) -> String {
    if v != 0.0 && v.is_finite() && !(1e-3..1e6).contains(&v.abs()) {
        format!("{v:.4e}")
    } else {
        format!("{v:.6}")
    }
}

fn describe(t: &Tolerance) -> String {
    match *t {
        Tolerance::AtMost { bound } => format!("<= {}", num(bound)),
        Tolerance::Below { bound } => format!("< {}", num(bound)),
        Tolerance::Above { bound } => format!("> {}", num(bound)),
        Tolerance::Within { center, half_width } => format!("{} +/- {}", num(center), num(half_width)),
        Tolerance::Informational => "info".into(),
    }
}

pub fn experiment(mut cfg: ExperimentConfig, out: Option<PathBuf>, root: &Path) -> Result<(), Failure> {
    let started = now();
    let out = out.or_else(|| cfg.output.clone()).unwrap_or_else(|| root.join(cfg.id()));
    cfg.output = Some(out.clone());
    let result = experiments::run(&cfg)?;
    let written = result.write(&out)?;
    let r = &result.report;
    for e in &r.entries {
        let c = e.c.map_or(String::new(), |c| format!(" c={c:e}"));
        let verdict = match (&e.tolerance, e.passed) {
            (Tolerance::Informational, _) => "",
            (_, true) => " ok",
            (_, false) if e.hard => " FAILED (hard)",
            (_, false) => " FAILED",
        };
        println!("{}{c}: {} [{}]{verdict}", e.name, num(e.value), describe(&e.tolerance));
    }
    for f in &r.flags {
        println!("flag: {f}");
    }
    finish(ResolvedConfig::Experiment(cfg), started, &out, &written)?;
    if r.hard_failure() {
        return Err(Failure::Runtime(format!("experiment '{}' failed a hard check", r.id)));
    }
    Ok(())
}

pub fn replay(path: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let m = RunManifest::load(path)?;
    let out = out.unwrap_or_else(|| PathBuf::from(format!("{}-replay", m.output_dir.display())));
    // The root only matters when no output directory is set, which never
    // happens here.
    let root = Path::new(".");
    match m.config {
        ResolvedConfig::Simulate(mut a) => {
            a.out = Some(out);
            simulate(a, root)
        }
        ResolvedConfig::Cluster(mut a) => {
            a.out = Some(out);
            cluster(a, root)
        }
        ResolvedConfig::Render(mut a) => {
            a.out = Some(out);
            render(a, root)
        }
        ResolvedConfig::Analyze(mut a) => {
            a.out = Some(out);
            analyze(a)
        }
        ResolvedConfig::Experiment(cfg) => experiment(cfg, Some(out), root),
    }
}
