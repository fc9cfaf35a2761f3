mod commands;
mod data;
mod run;

use clap::{Parser, Subcommand};

/// Fingerprint ROI segmentation with adversarial sensor alignment.
#[derive(Parser, Debug)]
#[command(name = "fpseg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    Synthdata(commands::synthdata::SynthArgs),
    Train(Box<commands::train::TrainArgs>),
    Eval(commands::eval::EvalArgs),
    Gradcam(commands::gradcam::GradcamArgs),
    Report(commands::report::ReportArgs),
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Synthdata(a) => commands::synthdata::run(&a),
        Command::Train(a) => commands::train::run(&a),
        Command::Eval(a) => commands::eval::run(&a),
        Command::Gradcam(a) => commands::gradcam::run(&a),
        Command::Report(a) => commands::report::run(&a),
    }
}
