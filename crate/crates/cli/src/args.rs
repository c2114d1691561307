use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rsodc::selection::GapReference;
use rsodc::{BInit, Params, VMode};

#[derive(Debug, Parser)]
#[command(name = "rsodc", version, about = "Regularized sparse optimal discriminant clustering")]
pub struct Cli {
    /// Worker threads for parallel work items (default: all cores).
    #[arg(long, env = "RSODC_THREADS", global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model to a CSV data set.
    Fit(FitArgs),
    /// Choose eta1, gamma and rho by selection-stability cross-validation.
    Tune(TuneArgs),
    /// Choose the number of clusters with the gap statistic.
    SelectK(SelectKArgs),
    /// Run one of the simulation designs.
    Simulate(SimulateArgs),
    /// Score a fit against known labels.
    Evaluate(EvaluateArgs),
    /// Write a synthetic data set and its labels.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum VModeArg {
    Paper,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BInitArg {
    Gaussian,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReferenceArg {
    Box,
    Pca,
}

impl From<ReferenceArg> for GapReference {
    fn from(r: ReferenceArg) -> Self {
        match r {
            ReferenceArg::Box => GapReference::BoundingBox,
            ReferenceArg::Pca => GapReference::PcaBox,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 2.5)]
    pub eta1: f64,
    #[arg(long, default_value_t = 0.0)]
    pub eta2: f64,
    /// Fusion weight; 0 runs the unfused model.
    #[arg(long, default_value_t = 0.001)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.01)]
    pub rho: f64,
    #[arg(long, default_value_t = 0.001)]
    pub nu: f64,
    #[arg(long, default_value_t = 0.1)]
    pub tau: f64,
    #[arg(long, default_value_t = 25)]
    pub delta: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 100)]
    pub max_outer: usize,
    #[arg(long, default_value_t = 1000)]
    pub max_inner: usize,
    #[arg(long, value_enum, default_value_t = VModeArg::Paper)]
    pub v_mode: VModeArg,
    #[arg(long, value_enum, default_value_t = BInitArg::Gaussian)]
    pub b_init: BInitArg,
    /// k-means restarts.
    #[arg(long, default_value_t = 20)]
    pub restarts: usize,
}

impl SolverArgs {
    pub fn params(&self) -> Params {
        Params {
            eta1: self.eta1,
            eta2: self.eta2,
            gamma: self.gamma,
            rho: self.rho,
            nu: self.nu,
            epsilon: self.epsilon,
            max_outer: self.max_outer,
            max_inner: self.max_inner,
            tau: self.tau,
            delta: self.delta,
            v_mode: match self.v_mode {
                VModeArg::Paper => VMode::Paper,
                VModeArg::Exact => VMode::Exact,
            },
            b_init: match self.b_init {
                BInitArg::Gaussian => BInit::Gaussian,
                BInitArg::Zero => BInit::Zero,
            },
            kmeans_restarts: self.restarts,
            ..Params::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Data CSV: rows are subjects, columns are variables.
    #[arg(long)]
    pub input: PathBuf,
    /// The CSV has no header row.
    #[arg(long)]
    pub no_header: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub k: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub k: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0])]
    pub eta1_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.001, 0.003, 0.005, 0.007, 0.01])]
    pub gamma_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.03, 0.05, 0.07, 0.1])]
    pub rho_grid: Vec<f64>,
    /// Random half splits per combination.
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GapArgs {
    #[arg(long, default_value_t = 100)]
    pub mc_samples: usize,
    #[arg(long, value_enum, default_value_t = ReferenceArg::Box)]
    pub reference: ReferenceArg,
    /// k-means restarts inside the gap computation.
    #[arg(long, default_value_t = 10)]
    pub gap_restarts: usize,
}

impl GapArgs {
    pub fn options(&self) -> rsodc::selection::GapOptions {
        rsodc::selection::GapOptions {
            mc_samples: self.mc_samples,
            reference: self.reference.into(),
            restarts: self.gap_restarts,
        }
    }
}

#[derive(Debug, Args)]
pub struct SelectKArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 2)]
    pub k_min: usize,
    #[arg(long, default_value_t = 9)]
    pub k_max: usize,
    #[command(flatten)]
    pub gap: GapArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Design 1 compares methods, 2 sweeps (eta1, gamma, rho), 3 selects k,
    /// 4 sweeps (tau, delta), 5 repeats random coefficient starts.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
    pub design: u8,
    #[arg(long, default_value_t = 20)]
    pub replicates: usize,
    /// Subject counts (default 60,96,156 for design 1, else 60).
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    /// Variable counts (default 20,50,80,100 for design 1, else 20).
    #[arg(long, value_delimiter = ',')]
    pub p: Vec<usize>,
    /// Cluster counts (default 3,4 for design 1, 2,3 for design 3, else 3).
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<usize>,
    /// Mean distances (default 1.4,2.0,2.2 for design 1, else 2.2).
    #[arg(long, value_delimiter = ',')]
    pub theta: Vec<f64>,
    /// Informative correlations (default 0,0.5 for design 1, else 0.5).
    #[arg(long, value_delimiter = ',')]
    pub xi: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0])]
    pub eta1_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.001, 0.003, 0.005, 0.007, 0.01])]
    pub gamma_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.03, 0.05, 0.07, 0.1])]
    pub rho_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.001, 0.005, 0.01, 0.05, 0.1])]
    pub tau_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [5, 10, 15, 20, 25, 30, 35, 40, 45, 50, 55])]
    pub delta_grid: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    pub k_min: usize,
    #[arg(long, default_value_t = 9)]
    pub k_max: usize,
    #[command(flatten)]
    pub gap: GapArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// `fit.json` written by `rsodc fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// CSV whose first column holds the true label of each subject.
    #[arg(long)]
    pub truth: PathBuf,
    /// 1-based indices of the informative variables.
    #[arg(long, value_delimiter = ',')]
    pub informative: Vec<usize>,
    /// Data CSV, for per-variable F scores.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Truth and data CSVs have no header row.
    #[arg(long)]
    pub no_header: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 60)]
    pub n: usize,
    #[arg(long, default_value_t = 20)]
    pub p: usize,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 2.2)]
    pub theta: f64,
    #[arg(long, default_value_t = 0.5)]
    pub xi: f64,
    #[arg(long, default_value_t = 0.6)]
    pub xi_dagger: f64,
    /// Informative variable count.
    #[arg(long, default_value_t = 2)]
    pub q: usize,
    /// Correlated-noise block size (required unless p is 20, 50, 80 or 100).
    #[arg(long)]
    pub c_star: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}
