//! `mechdis`: generate synthetic sequence datasets, train the masked-prior
//! sequential VAE, evaluate disentanglement, sweep regularization strengths,
//! and run the identifiability checkers.
//!
//! Exit codes: 0 success, 2 usage/validation, 3 numeric failure,
//! 4 lemma counterexample found.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use mechdis_core::CoreError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mechdis", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory (meta.json + x/a/z.bin).
    Generate(GenerateArgs),
    /// Train on a dataset; writes checkpoint.json, log.csv and report.json.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset; writes or prints report.json.
    Eval(EvalArgs),
    /// Train+eval over a grid of regularization strengths and seeds.
    Sweep(SweepArgs),
    /// Check the graphical criterion and sufficient variability.
    Check(CheckArgs),
    /// Randomized no-counterexample search for the sparsity lemmas.
    VerifyLemmas(VerifyLemmasArgs),
}

#[derive(clap::Args)]
pub struct GenerateArgs {
    /// t-a | nt-a | t-t | nt-t
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    dz: Option<usize>,
    #[arg(long)]
    dx: Option<usize>,
    #[arg(long = "n-seq")]
    n_seq: Option<usize>,
    /// Sequence length (timesteps per sequence).
    #[arg(long = "t-len")]
    t_len: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output dataset directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON file mirroring these flags; command line takes precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct TrainArgs {
    /// Dataset directory produced by `generate`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Run directory for checkpoint.json, log.csv, report.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "alpha-a")]
    alpha_a: Option<f64>,
    #[arg(long = "alpha-z")]
    alpha_z: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long = "log-every")]
    log_every: Option<usize>,
    #[arg(long = "checkpoint-every")]
    checkpoint_every: Option<usize>,
    /// Held-out fraction of sequences used by evaluation.
    #[arg(long)]
    holdout: Option<f64>,
    #[arg(long = "enc-hidden")]
    enc_hidden: Option<usize>,
    #[arg(long = "enc-layers")]
    enc_layers: Option<usize>,
    #[arg(long = "trans-hidden")]
    trans_hidden: Option<usize>,
    #[arg(long = "trans-layers")]
    trans_layers: Option<usize>,
    /// Train the supervised encoder baseline instead of the VAE.
    #[arg(long, default_value_t = false)]
    supervised: bool,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct EvalArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    holdout: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct SweepArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated list of action-sparsity strengths.
    #[arg(long = "alpha-a")]
    alpha_a: Option<String>,
    /// Comma-separated list of temporal-sparsity strengths.
    #[arg(long = "alpha-z")]
    alpha_z: Option<String>,
    /// Comma-separated seeds, one training run per (alpha, seed).
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
    #[arg(long = "enc-hidden")]
    enc_hidden: Option<usize>,
    #[arg(long = "enc-layers")]
    enc_layers: Option<usize>,
    #[arg(long = "trans-hidden")]
    trans_hidden: Option<usize>,
    #[arg(long = "trans-layers")]
    trans_layers: Option<usize>,
    #[arg(long)]
    holdout: Option<f64>,
    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Concurrent training jobs.
    #[arg(long)]
    jobs: Option<usize>,
    /// Keep per-run directories under this directory.
    #[arg(long = "run-dir")]
    run_dir: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct CheckArgs {
    /// Check the named generative process (t-a | nt-a | t-t | nt-t).
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    dz: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Check a graph JSON file instead of a generative process.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// action | temporal (required with --graph).
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    probes: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct VerifyLemmasArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;
pub const EXIT_COUNTEREXAMPLE: u8 = 4;

fn exit_code_for(err: &CoreError) -> u8 {
    match err {
        CoreError::NonFinite { .. } | CoreError::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(args) => commands::generate::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Sweep(args) => commands::sweep::run(args),
        Command::Check(args) => commands::check::run(args),
        Command::VerifyLemmas(args) => commands::verify_lemmas::run(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
