//! Command-line surface shared by all subcommands.

use std::path::PathBuf;

use clap::Args;

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Input dataset CSV
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Output directory
    #[arg(long, default_value = ".")]
    pub out: PathBuf,

    /// RNG seed (overrides the config)
    #[arg(long)]
    pub seed: Option<u64>,

    /// Thread count; results are identical for any value
    #[arg(long)]
    pub workers: Option<usize>,

    /// Ranking measure: FIM, Abs or CE
    #[arg(long)]
    pub metric: Option<String>,

    /// Copula family: N, C0 or PL
    #[arg(long)]
    pub copula: Option<String>,

    /// Margin links as "PH,PO"
    #[arg(long)]
    pub margins: Option<String>,

    /// Largest candidate set size
    #[arg(long)]
    pub kmax: Option<usize>,

    /// Stability-ratio exponent
    #[arg(long)]
    pub tau: Option<f64>,

    /// Bootstrap repetitions
    #[arg(long = "B")]
    pub b_reps: Option<usize>,

    /// Subsample size
    #[arg(long)]
    pub m: Option<usize>,

    /// Simulation scenario: A or B
    #[arg(long)]
    pub scenario: Option<String>,

    /// Sample size (simulate/bench)
    #[arg(long)]
    pub n: Option<usize>,

    /// Covariate count (simulate/bench)
    #[arg(long)]
    pub p: Option<usize>,

    /// Benchmark replicates per grid cell
    #[arg(long)]
    pub n_rep: Option<usize>,
}
