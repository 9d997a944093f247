mod config;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use bgm_core::{Error, ErrorKind, Result};
use clap::{Parser, ValueEnum};

use config::PipelineConfig;
use stages::{output_dir, Stage};

/// Tool version and the version of the CSV and JSON artifact layouts.
const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (artifact format 1)");

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Ingest,
    BuildGraphs,
    BuildTrees,
    Match,
    BuildTraining,
    Train,
    Recommend,
    Evaluate,
    Synth,
}

/// Behavior graph matching for cross-domain recommendation.
#[derive(Debug, Parser)]
#[command(name = "bgm", version = VERSION)]
struct Cli {
    command: Command,
    /// Pipeline configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the configured one.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn run(cli: &Cli) -> Result<()> {
    let config = PipelineConfig::load(&cli.config)?;
    let stage = Stage { out: output_dir(&config, cli.output.as_deref()), config: &config };
    match cli.command {
        Command::Ingest => stage.ingest(),
        Command::BuildGraphs => stage.build_graphs(),
        Command::BuildTrees => stage.build_trees(),
        Command::Match => stage.match_trees(),
        Command::BuildTraining => stage.build_training(),
        Command::Train => stage.train(),
        Command::Recommend => stage.recommend(),
        Command::Evaluate => stage.evaluate(),
        Command::Synth => stage.synth(),
    }
}

fn exit_code(err: &Error) -> u8 {
    match err.kind() {
        ErrorKind::Validation => 1,
        ErrorKind::Io => 2,
        ErrorKind::Config => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(3);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bgm: error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
