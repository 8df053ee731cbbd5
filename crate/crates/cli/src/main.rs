mod cli_args;
mod commands;
mod config;
mod data;
mod errors;
mod model_build;
mod report;

use clap::{Parser, Subcommand};

use cli_args::CommonArgs;
use config::RunConfig;
use errors::AppError;

#[derive(Parser)]
#[command(name = "brbvs", about = "Bivariate survival modelling and bootstrap variable selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with a truth sidecar
    Simulate(CommonArgs),
    /// Fit one copula survival model and report it
    Fit(CommonArgs),
    /// Run bootstrap variable selection
    Select(CommonArgs),
    /// Fit the full copula x link grid and rank by AIC
    Choose(CommonArgs),
    /// Replicate-level selection benchmark
    Bench(CommonArgs),
}

fn run() -> Result<(), AppError> {
    let cli = Cli::parse();
    let args = match &cli.command {
        Command::Simulate(a)
        | Command::Fit(a)
        | Command::Select(a)
        | Command::Choose(a)
        | Command::Bench(a) => a.clone(),
    };
    let cfg = RunConfig::load(args.config.as_deref())?;
    let workers = args.workers.or(cfg.workers).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| AppError::Config(format!("cannot build a {}-thread pool: {}", workers, e)))?;
    pool.install(|| match &cli.command {
        Command::Simulate(_) => commands::cmd_simulate(&cfg, &args),
        Command::Fit(_) => commands::cmd_fit(&cfg, &args),
        Command::Select(_) => commands::cmd_select(&cfg, &args),
        Command::Choose(_) => commands::cmd_choose(&cfg, &args),
        Command::Bench(_) => commands::cmd_bench(&cfg, &args),
    })
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {}", e);
        std::process::exit(e.exit_code().into());
    }
}
