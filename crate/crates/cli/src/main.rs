mod commands;
mod io;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::io::UsageError;

/// Seed used when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 0x7ab1e;

#[derive(Debug, Parser)]
#[command(
    name = "tableforge",
    version,
    about = "Table structure toolkit: metrics, bbox completion, synthesis and post-processing"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Worker threads for record-parallel work (default: all cores).
    #[arg(long, global = true, env = "TABLEFORGE_THREADS")]
    pub threads: Option<usize>,
    /// Print a human-readable summary instead of JSON.
    #[arg(long, global = true)]
    pub pretty: bool,
    /// Extra diagnostics on stderr; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tree-edit-distance similarity between ground truth and predicted tables.
    Teds(commands::TedsArgs),
    /// PASCAL VOC mAP of content-cell detections.
    EvalDetection(commands::EvalDetectionArgs),
    /// Size, complexity, strictness and missing-box statistics of a dataset.
    Stats(commands::StatsArgs),
    /// Converts an annotation file to canonical JSONL.
    Convert(commands::ConvertArgs),
    /// Concatenates datasets, resolving id collisions and optionally re-splitting.
    Combine(commands::CombineArgs),
    /// Reconstructs missing cell boxes of strict tables.
    CompleteBboxes(commands::CompleteArgs),
    /// Aligns predicted structures with PDF cells and inserts their text.
    Postprocess(commands::PostprocessArgs),
    /// Generates a synthetic table dataset.
    Synth(commands::SynthArgs),
    /// Harvests the most frequent cell terms into a word pool.
    BuildPool(commands::BuildPoolArgs),
    /// Loss utilities.
    Losses(commands::LossesArgs),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub pretty: bool,
    pub verbose: u8,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.global.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let cfg = RunConfig { pretty: cli.global.pretty, verbose: cli.global.verbose };
    match commands::run(cli.command, &cfg) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
