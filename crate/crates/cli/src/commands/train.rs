use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use fpseg::data::{Domain, FingerprintSample, TargetProtocol};
use fpseg::training::{prepare, TrainConfig, TrainMode, Trainer};

use crate::data::{load, load_target, select, DataArgs};
use crate::run::{self, RunManifest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Full size: 256-pixel inputs, 5000 steps.
    Default,
    /// Desk-scale synthetic runs.
    Smoke,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Baseline when alpha is 0, adversarial otherwise.
    Auto,
    Baseline,
    Adversarial,
    /// Segmentation-only training on labeled source and target images.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    Transductive,
    Split,
}

/// Train a baseline or adversarially aligned model.
#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Run directory; with several alpha values one subdirectory per value.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file with TrainConfig fields; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Default)]
    pub preset: Preset,
    #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
    pub mode: ModeArg,
    /// Source databases (default: every source database).
    #[arg(long, value_delimiter = ',')]
    pub sources: Vec<String>,
    /// Target databases (default: every target database).
    #[arg(long, value_delimiter = ',')]
    pub targets: Vec<String>,
    /// Adversarial weight; a comma-separated list runs a sweep.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub alpha: Vec<f64>,
    /// Refinement iterations.
    #[arg(long = "T")]
    pub iterations: Option<usize>,
    /// Discriminated iterations: 1 or T.
    #[arg(long = "T-disc")]
    pub disc_iterations: Option<usize>,
    #[arg(long)]
    pub iters: Option<u64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub adam_eps: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub side: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub base: Option<usize>,
    #[arg(long)]
    pub disc_layers: Option<usize>,
    #[arg(long)]
    pub disc_width: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    #[arg(long, value_enum)]
    pub protocol: Option<ProtocolArg>,
    /// Log progress every this many steps.
    #[arg(long, default_value_t = 100)]
    pub log_every: u64,
}

impl TrainArgs {
    fn base_config(&self) -> Result<TrainConfig> {
        match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                Ok(TrainConfig::from_toml_str(&text)?)
            }
            None => Ok(match self.preset {
                Preset::Default => TrainConfig::default(),
                Preset::Smoke => TrainConfig::smoke(),
            }),
        }
    }

    pub fn configs(&self) -> Result<Vec<TrainConfig>> {
        let mut c = self.base_config()?;
        macro_rules! set {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $(if let Some(v) = self.$flag { c.$field = v; })*
            };
        }
        set!(
            iterations => iterations,
            iters => total_iterations,
            batch => per_domain_batch,
            lr => learning_rate,
            beta1 => beta1,
            beta2 => beta2,
            adam_eps => adam_eps,
            seed => seed,
            side => input_side,
            depth => depth,
            base => base_channels,
            disc_layers => disc_conv_layers,
            disc_width => disc_hidden_width,
            checkpoint_every => checkpoint_every,
        );
        // Following T unless given explicitly keeps `--T 1` valid.
        c.disc_iterations = match self.disc_iterations {
            Some(v) => v,
            None if self.iterations.is_some() && c.disc_iterations != 1 => c.iterations,
            None => c.disc_iterations,
        };
        if let Some(p) = self.protocol {
            c.target_protocol = match p {
                ProtocolArg::Transductive => TargetProtocol::Transductive,
                ProtocolArg::Split => TargetProtocol::Split,
            };
        }
        let alphas = if self.alpha.is_empty() {
            vec![c.alpha]
        } else {
            self.alpha.clone()
        };
        alphas
            .into_iter()
            .map(|alpha| {
                let cfg = TrainConfig { alpha, ..c.clone() };
                cfg.validate()?;
                Ok(cfg)
            })
            .collect()
    }
}

fn mode_for(arg: ModeArg, alpha: f64) -> TrainMode {
    match arg {
        ModeArg::Auto if alpha == 0.0 => TrainMode::Baseline,
        ModeArg::Auto | ModeArg::Adversarial => TrainMode::Adversarial,
        ModeArg::Baseline | ModeArg::Full => TrainMode::Baseline,
    }
}

fn variant(arg: ModeArg, mode: TrainMode) -> &'static str {
    match (arg, mode) {
        (ModeArg::Full, _) => "runet-full (approximate)",
        (_, TrainMode::Baseline) => "runet",
        (_, TrainMode::Adversarial) => "ra-runet",
    }
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let configs = args.configs()?;
    let catalog = args.data.catalog()?;
    let source_names = select(&catalog, Domain::Source, &args.sources)?;
    let target_names = select(&catalog, Domain::Target, &args.targets)?;
    if source_names.is_empty() {
        bail!("the catalog has no source database");
    }
    let sweep = configs.len() > 1;
    for config in configs {
        let dir = if sweep {
            args.out.join(format!("alpha-{}", config.alpha))
        } else {
            args.out.clone()
        };
        let mode = mode_for(args.mode, config.alpha);
        let mut source = load(&catalog, &source_names)?;
        let (adapt, _) = load_target(&catalog, &target_names, config.target_protocol)?;
        let target = match (args.mode, mode) {
            (ModeArg::Full, _) => {
                source.extend(adapt);
                Vec::new()
            }
            (_, TrainMode::Adversarial) if adapt.is_empty() => {
                bail!("adversarial training needs at least one target database")
            }
            (_, TrainMode::Adversarial) => adapt,
            (_, TrainMode::Baseline) => Vec::new(),
        };
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            code_version: run::code_version(),
            command: std::env::args().collect(),
            config: config.clone(),
            mode,
            variant: variant(args.mode, mode).into(),
            seed: config.seed,
            data_root: args.data.data_root.clone(),
            source_databases: source_names.clone(),
            target_databases: if target.is_empty() {
                Vec::new()
            } else {
                target_names.clone()
            },
            catalog: catalog.entries.clone(),
            output_dir: dir.clone(),
            started_unix: run::now_unix(),
            finished_unix: None,
        };
        train_one(manifest, &dir, &source, &target, args.log_every)?;
    }
    Ok(())
}

fn train_one(
    mut manifest: RunManifest,
    dir: &Path,
    source: &[FingerprintSample],
    target: &[FingerprintSample],
    log_every: u64,
) -> Result<()> {
    let config = manifest.config.clone();
    let ckpt_dir = dir.join(run::CHECKPOINT_DIR);
    std::fs::create_dir_all(&ckpt_dir)
        .with_context(|| format!("creating {}", ckpt_dir.display()))?;
    manifest.write(dir)?;
    std::fs::write(dir.join(run::CONFIG), config.to_toml_string())?;
    let source = prepare(source, config.input_side, config.depth)?;
    let target = prepare(target, config.input_side, config.depth)?;
    let mut trainer = Trainer::new(config.clone(), manifest.mode, &source, &target)?;
    log::info!(
        "{:?} run, alpha {}, {} source / {} target images, {} parameters -> {}",
        manifest.mode,
        config.alpha,
        source.len(),
        target.len(),
        trainer.params().numel(),
        dir.display()
    );
    let mut log = BufWriter::new(File::create(dir.join(run::LOG))?);
    trainer.run(|record, t| {
        writeln!(log, "{}", record.to_json_line()).map_err(|e| fpseg::Error::Io {
            path: dir.join(run::LOG),
            source: e,
        })?;
        if log_every > 0 && record.iteration % log_every == 0 {
            log::info!(
                "step {}: seg {:.4} adv {:?} total {:.4} |g| {:.3}",
                record.iteration,
                record.seg.last().copied().unwrap_or(f64::NAN),
                record.adv,
                record.total,
                record.grad_norm
            );
        }
        if config.checkpoint_every > 0 && record.iteration % config.checkpoint_every == 0 {
            t.checkpoint()
                .save(&ckpt_dir.join(format!("step-{:06}.ckpt", record.iteration)))?;
        }
        Ok(())
    })?;
    log.flush()?;
    trainer
        .checkpoint()
        .save(&dir.join(run::FINAL_CHECKPOINT))?;
    manifest.finished_unix = Some(run::now_unix());
    manifest.write(dir)?;
    println!("{}", dir.join(run::FINAL_CHECKPOINT).display());
    Ok(())
}
