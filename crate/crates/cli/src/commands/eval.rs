use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use fpseg::data::{Domain, FingerprintSample, TargetProtocol};
use fpseg::training::{compare, evaluate, Checkpoint, DEFAULT_THRESHOLD};

use super::train::ProtocolArg;
use crate::data::{load, load_target, select, DataArgs};

/// Score a checkpoint, or two side by side, on target databases.
#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Second checkpoint for a side-by-side table.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[arg(long, default_value = "model")]
    pub label: String,
    #[arg(long, default_value = "compare")]
    pub compare_label: String,
    /// Databases to score (default: every target database).
    #[arg(long, value_delimiter = ',')]
    pub databases: Option<Vec<String>>,
    /// Which target images to score; defaults to the checkpoint's protocol.
    #[arg(long, value_enum)]
    pub protocol: Option<ProtocolArg>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Directory for `metrics.csv` and `metrics.md`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Evaluation images of `names`: every source image, and the evaluation
/// half of each target database.
pub fn eval_samples(
    catalog: &fpseg::data::Catalog,
    names: &[String],
    protocol: TargetProtocol,
) -> Result<Vec<FingerprintSample>> {
    let mut out = Vec::new();
    for name in names {
        let entry = catalog
            .get(name)
            .with_context(|| format!("unknown database `{name}`"))?;
        match entry.domain {
            Domain::Source => out.extend(load(catalog, std::slice::from_ref(name))?),
            Domain::Target => {
                out.extend(load_target(catalog, std::slice::from_ref(name), protocol)?.1)
            }
        }
    }
    Ok(out)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

pub fn run(args: &EvalArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&args.threshold) {
        bail!("threshold must lie in [0, 1], got {}", args.threshold);
    }
    let catalog = args.data.catalog()?;
    let names = match &args.databases {
        Some(list) if list.iter().all(|s| s.is_empty()) => bail!("--databases is empty"),
        Some(list) => {
            for name in list {
                if catalog.get(name).is_none() {
                    let known: Vec<&str> =
                        catalog.entries.iter().map(|e| e.name.as_str()).collect();
                    bail!("unknown database `{name}`; the catalog lists {known:?}");
                }
            }
            list.clone()
        }
        None => select(&catalog, Domain::Target, &[])?,
    };
    if names.is_empty() {
        bail!("no databases to evaluate");
    }
    let a = load_checkpoint(&args.checkpoint)?;
    let protocol = match args.protocol {
        Some(ProtocolArg::Transductive) => TargetProtocol::Transductive,
        Some(ProtocolArg::Split) => TargetProtocol::Split,
        None => a.config.target_protocol,
    };
    let samples = eval_samples(&catalog, &names, protocol)?;
    if samples.is_empty() {
        bail!("the selected databases hold no evaluation images");
    }
    let report_a = evaluate(&a, &samples, args.threshold)?;
    let (csv, md) = match &args.compare {
        None => (report_a.to_csv(), report_a.to_markdown()),
        Some(path) => {
            let report_b = evaluate(&load_checkpoint(path)?, &samples, args.threshold)?;
            let c = compare(&args.label, &report_a, &args.compare_label, &report_b)?;
            (c.to_csv(), c.to_markdown())
        }
    };
    print!("{md}");
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        std::fs::write(dir.join("metrics.csv"), csv)?;
        std::fs::write(dir.join("metrics.md"), md)?;
    }
    Ok(())
}
