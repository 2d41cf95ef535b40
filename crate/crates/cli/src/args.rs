use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use phasecnmf::{Method, SeparationConfig};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "PHASECNMF_OUT";
pub const DEFAULT_OUT_ROOT: &str = "phasecnmf-out";

#[derive(Debug, Parser)]
#[command(name = "phasecnmf", version, about = "Complex NMF source separation under phase constraints")]
pub struct Cli {
    /// Worker threads for independent mixtures and grid cells (0 = all cores).
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus of two-source damped harmonic mixtures.
    Synth(SynthArgs),
    /// Separate one manifest, or every mixture directory of a corpus.
    Separate(SeparateArgs),
    /// Score separated stems against ground truth and write a CSV.
    Eval(EvalArgs),
    /// Run cnmf-phi over a (sigma_u, sigma_r) grid and write a CSV.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Corpus seed; every mixture seed is derived from it.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Number of mixtures.
    #[arg(long, default_value_t = 30)]
    pub count: usize,
    /// Output directory [default: $PHASECNMF_OUT/corpus].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Overrides applied on top of the manifest's `[separation]` table.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// Sparsity weight [default: derived from the mixture energy].
    #[arg(long)]
    pub sigma_s: Option<f64>,
    /// Sparsity exponent in (0, 2).
    #[arg(long)]
    pub p: Option<f64>,
    /// Outer iterations of the complex NMF.
    #[arg(long)]
    pub iters: Option<usize>,
    /// KL-NMF iterations (NMF-W and the complex NMF initializer).
    #[arg(long)]
    pub init_iters: Option<usize>,
    /// Seed for random initialization.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ModelArgs {
    pub fn apply(&self, mut config: SeparationConfig) -> SeparationConfig {
        if self.sigma_s.is_some() {
            config.sigma_s = self.sigma_s;
        }
        if let Some(p) = self.p {
            config.sparsity_exponent = p;
        }
        if let Some(n) = self.iters {
            config.outer_iterations = n;
        }
        if let Some(n) = self.init_iters {
            config.init_nmf_iterations = n;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        config
    }
}

#[derive(Debug, Args)]
pub struct SeparateArgs {
    /// A manifest file or a corpus directory.
    pub input: PathBuf,
    #[arg(long, default_value = "cnmf-phi")]
    pub method: Method,
    #[arg(long)]
    pub sigma_u: Option<f64>,
    #[arg(long)]
    pub sigma_r: Option<f64>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Stem directory for a single manifest [default: <manifest dir>/<method>].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Corpus directory holding one sub-directory per mixture.
    pub corpus: PathBuf,
    /// Methods to score, comma separated.
    #[arg(long, value_delimiter = ',', default_values = ["nmf-w", "cnmf", "cnmf-phi"])]
    pub method: Vec<Method>,
    /// CSV path [default: $PHASECNMF_OUT/eval.csv].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Corpus directory holding one sub-directory per mixture.
    pub corpus: PathBuf,
    /// Grid of unwrapping weights, comma separated.
    #[arg(long, value_delimiter = ',', default_values = ["0.01", "0.05", "0.2", "1", "5"])]
    pub sigma_u: Vec<f64>,
    /// Grid of repetition weights, comma separated.
    #[arg(long, value_delimiter = ',', default_values = ["0.2"])]
    pub sigma_r: Vec<f64>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// CSV path [default: $PHASECNMF_OUT/sweep.csv].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn out_root() -> PathBuf {
    std::env::var_os(OUT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT))
}
