use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use screamkit::pipeline::{run, Command, Overrides, PipelineError};
use screamkit::FeatureSetId;

/// Vocal-technique classification benchmark.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute feature files from a manifest
    Extract(Opts),
    /// Undersample and split blocks by band
    Split(Opts),
    /// Train the configured models
    Train(Opts),
    /// Evaluate trained models on the test partition
    Eval(Opts),
    /// t-SNE projection of a feature file
    Project(Opts),
    /// Dataset statistics
    Stats(Opts),
}

#[derive(Args)]
struct Opts {
    /// Experiment config (JSON)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sets every seed
    #[arg(long)]
    seed: Option<u64>,
    /// fs1..fs5, comma separated
    #[arg(long = "feature-set", value_delimiter = ',')]
    feature_set: Vec<FeatureSetId>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(3..=6))]
    classes: Option<u8>,
    /// Feature file for split/project
    #[arg(long)]
    features: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SCREAMKIT_LOG", "info")).init();
    let cli = Cli::parse();
    let (command, opts) = match cli.command {
        Cmd::Extract(o) => (Command::Extract, o),
        Cmd::Split(o) => (Command::Split, o),
        Cmd::Train(o) => (Command::Train, o),
        Cmd::Eval(o) => (Command::Eval, o),
        Cmd::Project(o) => (Command::Project, o),
        Cmd::Stats(o) => (Command::Stats, o),
    };
    let overrides = Overrides {
        manifest: opts.manifest,
        out: opts.out,
        seed: opts.seed,
        feature_sets: opts.feature_set,
        classes: opts.classes,
        features: opts.features,
    };
    match run(command, opts.config.as_deref(), &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            if let PipelineError::Partial { failures, .. } = &e {
                for f in failures {
                    eprintln!("row {} ({}): {}", f.row, f.song_id, f.message);
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
