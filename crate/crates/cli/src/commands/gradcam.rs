use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use fpseg::explain::{cam_overlay, save_rgb, seg_grad_cam, side_by_side, CamRequest};
use fpseg::training::{Checkpoint, Segmenter};
use ndarray::Array2;

use crate::data::{load, DataArgs};

/// Render Seg-Grad-CAM overlays for chosen samples.
#[derive(Args, Debug)]
pub struct GradcamArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// One or more checkpoints; each gets its own overlay.
    #[arg(long, value_delimiter = ',', required = true)]
    pub checkpoint: Vec<PathBuf>,
    #[arg(long)]
    pub database: String,
    /// Sample ids, e.g. `000003`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sample: Vec<String>,
    /// Target layer (default: the last decoder convolution).
    #[arg(long)]
    pub layer: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the input and all overlays of a sample as one strip.
    #[arg(long)]
    pub panel: bool,
}

pub fn run(args: &GradcamArgs) -> Result<()> {
    let catalog = args.data.catalog()?;
    let samples = load(&catalog, std::slice::from_ref(&args.database))?;
    let chosen = args
        .sample
        .iter()
        .map(|id| match samples.iter().find(|s| &s.id == id) {
            Some(s) => Ok(s),
            None => {
                let ids: Vec<&str> = samples.iter().map(|s| s.id.as_str()).collect();
                bail!(
                    "no sample `{id}` in {}; available ids: {}",
                    args.database,
                    ids.join(", ")
                )
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let segmenters = args
        .checkpoint
        .iter()
        .map(|p| {
            let ckpt = Checkpoint::load(p)
                .with_context(|| format!("loading checkpoint {}", p.display()))?;
            Ok(Segmenter::from_checkpoint(&ckpt)?)
        })
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    for sample in chosen {
        let mut panels = Vec::new();
        for (k, seg) in segmenters.iter().enumerate() {
            let mut req = CamRequest::new(seg, sample);
            if let Some(layer) = &args.layer {
                req.target_layer = layer.clone();
            }
            let cam = seg_grad_cam(&req)?;
            if panels.is_empty() {
                panels.push(cam_overlay(&cam.image, &Array2::zeros(cam.image.dim()))?);
            }
            let overlay = cam_overlay(&cam.image, &cam.heatmap)?;
            let path = args
                .out
                .join(format!("{}-{}-m{k}.png", args.database, sample.id));
            save_rgb(&overlay, &path)?;
            println!("{}", path.display());
            panels.push(overlay);
        }
        if args.panel {
            let path = args
                .out
                .join(format!("{}-{}-panel.png", args.database, sample.id));
            save_rgb(&side_by_side(&panels)?, &path)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}
