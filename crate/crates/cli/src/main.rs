use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gxe_core::config::RunConfig;
use gxe_core::MethodVariant;

mod commands;

/// Exit statuses.
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;
pub const EXIT_GATE: u8 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_CONFIG, message: msg.into() }
    }
}

impl From<gxe_core::Error> for CliError {
    fn from(e: gxe_core::Error) -> Self {
        use gxe_core::Error as E;
        let code = match &e {
            E::InvalidConfig(_) | E::Parameter(_) | E::Spec(_) | E::BasisIntegrity(_) => EXIT_CONFIG,
            E::Dimension(_) | E::Ingestion(_) | E::Io(_) | E::Csv(_) | E::Identifier(_) => EXIT_DATA,
            E::Degenerate { .. } | E::State(_) | E::EmptyChain | E::Diagnostic(_) => EXIT_NUMERICAL,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError { code: EXIT_DATA, message: e.to_string() }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError { code: EXIT_DATA, message: e.to_string() }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "gxe", version, about = "Bayesian varying-coefficient G x E models: simulate, fit, replicate, benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a training set, a test set and the truth of one simulation design.
    Simulate(SimulateArgs),
    /// Fit one method to a dataset and write chains, selections, curves and diagnostics.
    Fit(FitArgs),
    /// Run a simulation study over replicates and methods.
    Replicate(ReplicateArgs),
    /// Time single-chain BSSVC-SI fits over a grid of sizes.
    Benchmark(BenchmarkArgs),
    /// Print the default configuration.
    Defaults,
}

#[derive(Args, Clone, Default)]
pub struct CommonArgs {
    /// TOML configuration; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Clone, Default)]
pub struct ChainArgs {
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    /// B-spline degree O.
    #[arg(long)]
    pub degree: Option<usize>,
    /// Number of interior knots K.
    #[arg(long)]
    pub knots: Option<usize>,
}

#[derive(Args, Clone, Default)]
pub struct SimArgs {
    /// Simulation design, 1 to 4.
    #[arg(long)]
    pub example: Option<u8>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    /// Genotype matrix for example 4.
    #[arg(long)]
    pub genotypes: Option<PathBuf>,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long, value_parser = parse_method)]
    pub method: Option<MethodVariant>,
    /// Training dataset CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Test dataset CSV for prediction error.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Truth CSV for identification and estimation scores.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Report the PSRF gate without failing on it.
    #[arg(long)]
    pub no_psrf_gate: bool,
}

#[derive(Args)]
pub struct ReplicateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Methods to compare, comma separated.
    #[arg(long, value_parser = parse_method, value_delimiter = ',')]
    pub method: Vec<MethodVariant>,
    #[arg(long)]
    pub replicates: Option<usize>,
}

#[derive(Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "500")]
    pub n: Vec<usize>,
    /// Gene counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "100")]
    pub p: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    pub iters: usize,
    #[arg(long)]
    pub degree: Option<usize>,
    #[arg(long)]
    pub knots: Option<usize>,
}

fn parse_method(s: &str) -> std::result::Result<MethodVariant, String> {
    s.parse::<MethodVariant>().map_err(|e| e.to_string())
}

/// Base configuration from `--config` or the defaults, with the common flags applied.
pub fn base_config(common: &CommonArgs) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    Ok(cfg)
}

pub fn apply_chain(cfg: &mut RunConfig, a: &ChainArgs) {
    if let Some(v) = a.iters {
        cfg.chain.iterations = v;
    }
    if let Some(v) = a.burnin {
        cfg.chain.burn_in = v;
    }
    if let Some(v) = a.chains {
        cfg.chain.n_chains = v;
    }
    if let Some(v) = a.degree {
        cfg.spline.degree = v;
    }
    if let Some(v) = a.knots {
        cfg.spline.interior_knots = v;
    }
}

pub fn apply_sim(cfg: &mut RunConfig, a: &SimArgs) {
    if let Some(v) = a.example {
        cfg.simulation.example = v;
    }
    if let Some(v) = a.n {
        cfg.simulation.n = v;
    }
    if let Some(v) = a.p {
        cfg.simulation.p = v;
    }
    if let Some(v) = &a.genotypes {
        cfg.data.genotypes = Some(v.clone());
    }
}

fn init_threads(n: usize) -> CliResult<()> {
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Defaults => {
            print!("{}", RunConfig::default().to_toml());
            Ok(())
        }
        Command::Simulate(a) => {
            let mut cfg = base_config(&a.common)?;
            apply_sim(&mut cfg, &a.sim);
            cfg.simulation.validate()?;
            commands::simulate(&cfg)
        }
        Command::Fit(a) => {
            let mut cfg = base_config(&a.common)?;
            apply_chain(&mut cfg, &a.chain);
            if let Some(m) = a.method {
                cfg.method = m;
            }
            if let Some(d) = &a.data {
                cfg.data.dataset = Some(d.clone());
            }
            if let Some(t) = &a.test {
                cfg.data.test = Some(t.clone());
            }
            if let Some(t) = &a.truth {
                cfg.data.truth = Some(t.clone());
            }
            if a.no_psrf_gate {
                cfg.psrf_gate = false;
            }
            cfg.validate()?;
            init_threads(cfg.threads)?;
            commands::fit(&cfg)
        }
        Command::Replicate(a) => {
            let mut cfg = base_config(&a.common)?;
            apply_chain(&mut cfg, &a.chain);
            apply_sim(&mut cfg, &a.sim);
            if !a.method.is_empty() {
                cfg.study.methods = a.method.clone();
            }
            if let Some(r) = a.replicates {
                cfg.replicates = r;
            }
            cfg.validate()?;
            init_threads(cfg.threads)?;
            commands::replicate(&cfg)
        }
        Command::Benchmark(a) => {
            let mut cfg = base_config(&a.common)?;
            if let Some(v) = a.degree {
                cfg.spline.degree = v;
            }
            if let Some(v) = a.knots {
                cfg.spline.interior_knots = v;
            }
            init_threads(cfg.threads)?;
            commands::benchmark(&cfg, &a.n, &a.p, a.iters)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
