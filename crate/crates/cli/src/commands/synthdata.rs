use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use fpseg::data::synth::{write_dataset, SensorStyle, SynthDatabase};
use fpseg::data::Sensing;

/// Generate a synthetic dataset: a labeled source database and an optional
/// target database imitating a second sensor.
#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output root; a `manifest.toml` is written next to the databases.
    #[arg(long)]
    pub out: PathBuf,
    /// Source images.
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    /// Target images; 0 writes no target database.
    #[arg(long, default_value_t = 0)]
    pub target_count: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(args: &SynthArgs) -> Result<()> {
    let mut dbs = vec![SynthDatabase {
        name: "synthetic".into(),
        sensing: Sensing::Synthetic,
        style: SensorStyle::synthetic(),
        count: args.count,
        width: args.width,
        height: args.height,
    }];
    if args.target_count > 0 {
        dbs.push(SynthDatabase {
            name: "shifted".into(),
            sensing: Sensing::Optical,
            style: SensorStyle::shifted(),
            count: args.target_count,
            width: args.width,
            height: args.height,
        });
    }
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    write_dataset(&args.out, &dbs, args.seed)?;
    for db in &dbs {
        println!(
            "{}: {} images ({}×{})",
            db.name, db.count, db.width, db.height
        );
    }
    Ok(())
}
