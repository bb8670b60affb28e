//! `ssmt` command-line front end.
//!
//! Exit status: 0 when every check passes, 1 when a check fails or a
//! computation breaks down, 2 on configuration errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Default seed when neither `--seed` nor the environment provides one.
pub const DEFAULT_SEED: u64 = 42;
/// Environment variable holding the default seed.
pub const SEED_ENV: &str = "SSMT_SEED";

#[derive(Debug, Parser)]
#[command(name = "ssmt", version, about = "Growing couplings of self-similar Markov trees")]
pub struct Cli {
    /// Worker threads (default: all cores for Monte Carlo commands, 1 otherwise).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Load options from a `key = value` file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write the effective options (including the seed) as a `key = value` file.
    #[arg(long, global = true)]
    pub save_config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Critical exponent of a binary locally-largest measure, or a curve over γ.
    AlphaC(AlphaCArgs),
    /// Quasi-preservation and monotonicity checks of a growing family.
    FlowCheck(FlowCheckArgs),
    /// Coupled decoration paths for a grid of starting values.
    Simulate(SimulateArgs),
    /// A decorated tree.
    Tree(TreeArgs),
    /// Nested trees over an x-grid with pairwise hypograph distances.
    Nested(NestedArgs),
    /// Grows a tree from one root decoration to a larger one.
    Grow(GrowArgs),
    /// Transport-equation solution on the simplex and the non-uniqueness certificate.
    Divfield(DivfieldArgs),
    /// Lists the catalog with critical exponents and moment bounds.
    Catalog(CatalogArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::AlphaC(_) => "alpha-c",
            Command::FlowCheck(_) => "flow-check",
            Command::Simulate(_) => "simulate",
            Command::Tree(_) => "tree",
            Command::Nested(_) => "nested",
            Command::Grow(_) => "grow",
            Command::Divfield(_) => "divfield",
            Command::Catalog(_) => "catalog",
        }
    }

    /// Seed of Monte Carlo commands.
    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Simulate(a) => Some(a.model.seed),
            Command::Tree(a) => Some(a.model.seed),
            Command::Nested(a) => Some(a.model.seed),
            Command::Grow(a) => Some(a.model.seed),
            Command::FlowCheck(a) => Some(a.seed),
            _ => None,
        }
    }

    fn monte_carlo(&self) -> bool {
        matches!(self, Command::Simulate(_) | Command::Tree(_) | Command::Nested(_) | Command::Grow(_))
    }
}

/// Quadruplet, family and seed shared by the simulation commands.
#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Catalog key, or `file:<path>` for a custom binary measure.
    #[arg(long, default_value = "brownian-mass-ll")]
    pub quad: String,
    /// Growing family key (default chosen from the measure).
    #[arg(long)]
    pub family: Option<String>,
    /// Self-similarity index (default: the catalog value).
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, env = SEED_ENV, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Relative fragment cutoff of the samplers.
    #[arg(long, default_value_t = 1e-3)]
    pub fragment_cutoff: f64,
}

#[derive(Debug, Args)]
pub struct AlphaCArgs {
    /// Catalog key or `file:<path>` of a binary locally-largest measure.
    #[arg(long, default_value = "gamma-binary:1.5")]
    pub measure: String,
    /// γ values of the power family, as `a,b,c` or `lo:hi:n`; writes a CSV.
    #[arg(long)]
    pub curve: Option<String>,
    /// CSV destination for `--curve` (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FlowCheckArgs {
    #[arg(long)]
    pub family: String,
    #[arg(long)]
    pub measure: String,
    #[arg(long)]
    pub alpha: f64,
    /// Support points of the monotonicity check.
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, env = SEED_ENV, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// CSV of the quasi-preservation rows.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Starting decorations, comma-separated.
    #[arg(long, default_value = "0.25,0.5,0.75,1")]
    pub xs: String,
    #[arg(long, default_value_t = ssmt::simulate::DEFAULT_STEP)]
    pub step: f64,
    /// `pure-jump` or `euler`.
    #[arg(long, default_value = "pure-jump")]
    pub backend: String,
    /// CSV of path knots.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Audit the coupled flow and fail on any violation.
    #[arg(long)]
    pub audit: bool,
}

#[derive(Debug, Args)]
pub struct TreeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1.0)]
    pub x: f64,
    /// Child cutoff (default: 10⁻³ times the root decoration).
    #[arg(long)]
    pub cutoff: Option<f64>,
    #[arg(long, default_value_t = ssmt::tree::DEFAULT_DEPTH_CAP)]
    pub depth_cap: usize,
    /// Text export of the tree.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Decoration samples per branch in the export.
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NestedArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Ascending x-grid, comma-separated.
    #[arg(long, default_value = "0.3,0.6,1.0")]
    pub xs: String,
    #[arg(long)]
    pub cutoff: Option<f64>,
    #[arg(long, default_value_t = ssmt::tree::DEFAULT_DEPTH_CAP)]
    pub depth_cap: usize,
    /// Mesh of the hypograph distance.
    #[arg(long, default_value_t = 1e-2)]
    pub mesh: f64,
    /// CSV of pairwise distances.
    #[arg(long)]
    pub distances: Option<PathBuf>,
    /// Hypograph SVG of all levels.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GrowArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0.5)]
    pub from: f64,
    #[arg(long, default_value_t = 1.0)]
    pub to: f64,
    #[arg(long)]
    pub cutoff: Option<f64>,
    #[arg(long, default_value_t = ssmt::tree::DEFAULT_DEPTH_CAP)]
    pub depth_cap: usize,
    /// Seed of the grafted subtrees (default: derived from `--seed`).
    #[arg(long)]
    pub fresh_seed: Option<u64>,
    /// Text export of the grown tree.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV of tip weights.
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DivfieldArgs {
    #[arg(long, default_value_t = ssmt::divfield::DEFAULT_N)]
    pub n: usize,
    #[arg(long, default_value_t = ssmt::divfield::DENSITY_ALPHA)]
    pub alpha: f64,
    /// Bump as `cx,cy,R,h`.
    #[arg(long)]
    pub bump: Option<String>,
    /// Residual tolerance of the certificate.
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    /// CSV of both fields at every node.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Arrow stride of the SVG.
    #[arg(long, default_value_t = 10)]
    pub stride: usize,
}

#[derive(Debug, Args)]
pub struct CatalogArgs {
    /// CSV destination (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Outcome of a command.
#[derive(Debug)]
pub enum Failure {
    /// A check ran and failed.
    Check(String),
    /// Bad configuration or input.
    Config(String),
    /// A computation failed.
    Runtime(String),
}

impl From<ssmt::Error> for Failure {
    fn from(e: ssmt::Error) -> Self {
        match e {
            ssmt::Error::Config(_) | ssmt::Error::Validation(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(format!("i/o: {e}"))
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Runtime(format!("csv: {e}"))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv = match config::merged_args(std::env::args().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let threads = cli.threads.unwrap_or(if cli.command.monte_carlo() { 0 } else { 1 });
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        log::warn!("thread pool already initialised: {e}");
    }
    if let Some(path) = &cli.save_config {
        if let Err(e) = config::save(path, &argv, &cli.command) {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
