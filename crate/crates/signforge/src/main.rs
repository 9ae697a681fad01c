use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use signforge::config::PipelineConfig;
use signforge::fixture::write_toy_fixture;
use signforge::pipeline::{Pipeline, RunOptions, Stage, StageStatus};
use signforge::Result;

#[derive(Parser)]
#[command(name = "signforge", version, about = "Day-to-night augmentation pipeline for traffic-sign detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StageArgs {
    /// Pipeline configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Regenerate stages whose outputs already exist.
    #[arg(long)]
    force: bool,
    /// Search log to replay before running new search rounds.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Crop, classify day/night and split the annotated dataset.
    Prepare(StageArgs),
    /// Train the bounding-box GAN on day images and the night pool.
    TrainBbgan(StageArgs),
    /// Search augmentation policies with the controller.
    SearchPolicies(StageArgs),
    /// Write the augmented training set of every configured method.
    Augment(StageArgs),
    /// Train one detector per augmentation method.
    TrainDetector(StageArgs),
    /// Evaluate the detectors on the day and night test sets.
    Evaluate(StageArgs),
    /// Run every stage in order.
    All(StageArgs),
    /// Write a procedural toy dataset and a config for it.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 40)]
        day: usize,
        #[arg(long, default_value_t = 20)]
        night: usize,
    },
}

fn run_stages(args: StageArgs, stages: &[Stage]) -> Result<()> {
    let mut config = PipelineConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = args.out {
        config.out_dir = out;
    }
    let options = RunOptions { force: args.force, resume: args.resume, verbose: !args.quiet };
    let pipeline = Pipeline::open(config, options)?;
    for (stage, status) in pipeline.run(stages)? {
        let word = match status {
            StageStatus::Ran => "done",
            StageStatus::Skipped => "skipped (up to date)",
        };
        println!("{stage}: {word}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prepare(a) => run_stages(a, &[Stage::Prepare]),
        Command::TrainBbgan(a) => run_stages(a, &[Stage::TrainBbgan]),
        Command::SearchPolicies(a) => run_stages(a, &[Stage::SearchPolicies]),
        Command::Augment(a) => run_stages(a, &[Stage::Augment]),
        Command::TrainDetector(a) => run_stages(a, &[Stage::TrainDetector]),
        Command::Evaluate(a) => run_stages(a, &[Stage::Evaluate]),
        Command::All(a) => run_stages(a, &Stage::ALL),
        Command::Synth { out, seed, day, night } => write_toy_fixture(&out, seed, day, night).map(|cfg| {
            println!("wrote {}", cfg.display());
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
