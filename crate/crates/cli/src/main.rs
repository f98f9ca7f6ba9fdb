mod commands;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Multispectral to hyperspectral reconstruction with scattering features.
#[derive(Debug, Parser)]
#[command(name = "scatspec", version, about)]
pub struct Cli {
    /// Maximum worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write seeded synthetic scenes (cube, MSI, mask) and a manifest.
    GenSynthetic(GenArgs),
    /// Train all networks on a data directory.
    Train(TrainArgs),
    /// Reconstruct a 61-band cube from one MSI file.
    Infer(InferArgs),
    /// Score predicted cubes against ground truth over skin pixels.
    Evaluate(EvalArgs),
    /// Write the scattering filters as cube files.
    InspectFilters(FilterArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 40)]
    pub count: usize,
    /// Side length in pixels; a multiple of 4.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    /// Reference widths (256/128 inverse channels).
    Reference,
    /// Narrow inverse networks (32/16) for single-machine runs.
    Bench,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// MISR training length.
    #[arg(long, value_parser = ["30", "60"])]
    pub misr_epochs: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML file with pipeline settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Profile::Reference)]
    pub profile: Profile,
    #[arg(long)]
    pub matching_epochs: Option<usize>,
    #[arg(long)]
    pub inverse_epochs: Option<usize>,
    /// Scattering scales.
    #[arg(long = "J")]
    pub j: Option<usize>,
    /// Scattering orientations.
    #[arg(long = "L")]
    pub l: Option<usize>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub models: PathBuf,
    #[arg(long)]
    pub msi: PathBuf,
    /// Skin mask; without it the NIR channel is thresholded.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Skip the spectral refinement stage.
    #[arg(long)]
    pub no_misr: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub masks: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long = "J", default_value_t = 2)]
    pub j: usize,
    #[arg(long = "L", default_value_t = 4)]
    pub l: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Bad arguments that clap cannot catch on its own.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    if err.chain().any(|e| {
        e.downcast_ref::<scatspec::pipeline::PipelineError>()
            .is_some_and(|p| p.is_numerical())
    }) {
        return 3;
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {line}");
            ExitCode::from(exit_code(&e))
        }
    }
}
