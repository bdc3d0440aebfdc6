mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "hlcompete", version, about = "Competitive Hastings-Levitov growth: exact simulation, clusters and limit diffusions")]
struct Cli {
    /// Worker threads for ensembles (default: all available cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    threads: Option<u32>,

    /// Root under which runs without --out get their own directory.
    #[arg(long, global = true, env = "HLCOMPETE_OUT", default_value = "runs")]
    out_root: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trajectory of the harmonic-measure process.
    Simulate(SimulateArgs),
    /// Grow a two-colour cluster, store it and render it.
    Cluster(ClusterArgs),
    /// Render a stored cluster file to SVG and CSV.
    Render(RenderArgs),
    /// Boundary classification, stationary law and Lyapunov check of a limit diffusion.
    Analyze(AnalyzeArgs),
    /// Run an experiment described by a TOML file.
    Experiment(ExperimentArgs),
    /// Re-run the command recorded in a run manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Built-in profile: hl0, section4 (alias coexistence) or ode-fixed-point.
    #[arg(long)]
    pub profile: String,
    /// Base capacity c > 0.
    #[arg(long, value_parser = positive)]
    pub c: f64,
    #[arg(long, value_parser = non_negative)]
    pub t_max: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Spacing of the stored sample grid.
    #[arg(long, default_value_t = 0.01, value_parser = positive)]
    pub sample_dt: f64,
    /// Store every jump instead of the sample grid.
    #[arg(long)]
    pub events: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[command(group(ArgGroup::new("limit").required(true).args(["n_particles", "t_max"])))]
pub struct ClusterArgs {
    #[arg(long)]
    pub profile: String,
    #[arg(long, value_parser = positive)]
    pub c: f64,
    #[arg(long)]
    pub n_particles: Option<usize>,
    #[arg(long, value_parser = non_negative)]
    pub t_max: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub style: RenderStyle,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct RenderStyle {
    /// Boundary samples per particle polyline.
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u32).range(2..))]
    pub samples: u32,
    /// Draw particles from this arrival index on; earlier ones are hidden.
    #[arg(long, default_value_t = 0)]
    pub from: usize,
    #[arg(long, default_value_t = 800)]
    pub size: u32,
    #[arg(long, default_value_t = 0.004, value_parser = positive)]
    pub stroke_width: f64,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct RenderArgs {
    /// Cluster file written by `cluster`.
    pub cluster: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub style: RenderStyle,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[command(group(ArgGroup::new("spec").required(true).args(["profile", "drift"])))]
pub struct AnalyzeArgs {
    /// Built-in profile whose limit diffusion is analysed.
    #[arg(long)]
    pub profile: Option<String>,
    /// Drift b(x) as an expression in x, e.g. "2*(1-x)".
    #[arg(long, requires = "variance")]
    pub drift: Option<String>,
    /// Variance a(x) as an expression in x, e.g. "2*x*(2-x)".
    #[arg(long, requires = "drift")]
    pub variance: Option<String>,
    /// Also write report.json and a manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed base in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    dry_run: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    manifest: PathBuf,
    /// Defaults to the original output directory with a `-replay` suffix.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        Ok(v) => Err(format!("expected a finite positive number, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        Ok(v) => Err(format!("expected a finite non-negative number, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

/// Usage errors exit with 2, runtime and numerical failures with 1.
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<hlcompete_core::Error> for Failure {
    fn from(e: hlcompete_core::Error) -> Self {
        use hlcompete_core::Error::*;
        match e {
            Parameter(_) | Config(_) | Expression { .. } | Specification(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let root = cli.out_root;
    match cli.command {
        Command::Simulate(a) => commands::simulate(a, &root),
        Command::Cluster(a) => commands::cluster(a, &root),
        Command::Render(a) => commands::render(a, &root),
        Command::Analyze(a) => commands::analyze(a),
        Command::Experiment(a) => {
            let mut cfg = commands::load_config(&a.config)?;
            if let Some(seed) = a.seed {
                cfg.seed = seed;
            }
            if a.dry_run {
                print!("{}", cfg.to_toml());
                return Ok(());
            }
            commands::experiment(cfg, a.out, &root)
        }
        Command::Replay(a) => commands::replay(&a.manifest, a.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
