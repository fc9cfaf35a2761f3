use serde::{Deserialize, Serialize};

use super::{build_objective, Checkpoint, LossBreakdown, ObjectiveForm, TrainConfig};
use crate::adversarial::Discriminator;
use crate::backbone::Backbone;
use crate::data::{preprocess, DomainBatcher, FingerprintSample};
use crate::nn::{Adam, Graph, ParamStore};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    /// Segmentation loss on source images only.
    Baseline,
    /// Segmentation loss plus recurrent adversarial feature alignment.
    Adversarial,
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub iteration: u64,
    pub seg: Vec<f64>,
    pub adv: Vec<f64>,
    pub total: f64,
    /// L2 norm of the gradient over all parameters.
    pub grad_norm: f64,
}

impl StepRecord {
    fn new(iteration: u64, loss: LossBreakdown, grad_norm: f64) -> Self {
        Self {
            iteration,
            seg: loss.seg_by_iter,
            adv: loss.adv_by_iter,
            total: loss.total,
            grad_norm,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

/// Owns the parameters and optimizer state of one run and advances it one
/// batch at a time. Samples must already be preprocessed to the configured
/// input side.
pub struct Trainer<'a> {
    config: TrainConfig,
    mode: TrainMode,
    backbone: Backbone,
    discriminator: Option<Discriminator>,
    params: ParamStore,
    optimizer: Adam,
    batcher: DomainBatcher<'a>,
    iteration: u64,
}

fn check_side(samples: &[FingerprintSample], side: usize, what: &str) -> Result<()> {
    match samples.iter().find(|s| s.image.dim() != (side, side)) {
        Some(s) => Err(Error::Shape(format!(
            "{what} sample {} is {:?}, expected {side}×{side}",
            s.id,
            s.image.dim()
        ))),
        None => Ok(()),
    }
}

impl<'a> Trainer<'a> {
    /// Fresh run. `target` is ignored in baseline mode.
    pub fn new(
        config: TrainConfig,
        mode: TrainMode,
        source: &'a [FingerprintSample],
        target: &'a [FingerprintSample],
    ) -> Result<Self> {
        config.validate()?;
        check_side(source, config.input_side, "source")?;
        let backbone = Backbone::new(config.backbone())?;
        let mut params = backbone.init(config.seed);
        let (discriminator, batcher) = match mode {
            TrainMode::Baseline => (
                None,
                DomainBatcher::source_only(source, config.per_domain_batch, config.seed)?,
            ),
            TrainMode::Adversarial => {
                check_side(target, config.input_side, "target")?;
                let disc = Discriminator::new(config.discriminator())?;
                params.merge(disc.init(config.seed));
                (
                    Some(disc),
                    DomainBatcher::new(source, target, config.per_domain_batch, config.seed)?,
                )
            }
        };
        Ok(Self {
            optimizer: Adam::new(config.adam()),
            config,
            mode,
            backbone,
            discriminator,
            params,
            batcher,
            iteration: 0,
        })
    }

    /// Continues a saved run on the same sample lists.
    pub fn resume(
        checkpoint: Checkpoint,
        source: &'a [FingerprintSample],
        target: &'a [FingerprintSample],
    ) -> Result<Self> {
        let mut t = Self::new(checkpoint.config, checkpoint.mode, source, target)?;
        if t.params.names().ne(checkpoint.params.names()) {
            return Err(Error::Checkpoint(
                "parameter names differ from the configured model".into(),
            ));
        }
        if let Some(state) = &checkpoint.batcher {
            t.batcher.restore(state)?;
        }
        t.params = checkpoint.params;
        t.optimizer = checkpoint.optimizer;
        t.iteration = checkpoint.iteration;
        Ok(t)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn mode(&self) -> TrainMode {
        self.mode
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn is_finished(&self) -> bool {
        self.iteration >= self.config.total_iterations
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            mode: self.mode,
            iteration: self.iteration,
            params: self.params.clone(),
            optimizer: self.optimizer.clone(),
            batcher: Some(self.batcher.state()),
        }
    }

    /// Draws a batch, differentiates the objective and applies one Adam
    /// update to every parameter.
    pub fn step(&mut self) -> Result<StepRecord> {
        let batch = self.batcher.next().expect("batcher is infinite");
        let mut g = Graph::new();
        let p = g.bind(&self.params);
        let nodes = build_objective(
            &mut g,
            &p,
            &self.backbone,
            self.discriminator.as_ref(),
            &batch,
            self.config.alpha,
            self.config.disc_iterations,
            ObjectiveForm::Reversed,
        )?;
        let loss = nodes.breakdown(&g, self.config.alpha)?;
        let next = self.iteration + 1;
        if !loss.total.is_finite() || !g.value(nodes.objective).item().is_finite() {
            return Err(Error::Diverged {
                iteration: next,
                detail: format!(
                    "loss is not finite: seg {:?}, adv {:?}",
                    loss.seg_by_iter, loss.adv_by_iter
                ),
            });
        }
        let grads = g.backward(nodes.objective).for_params(&g, &p);
        let grad_norm = grads
            .values()
            .flat_map(|t| t.data())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        if !grad_norm.is_finite() {
            return Err(Error::Diverged {
                iteration: next,
                detail: "gradient is not finite".into(),
            });
        }
        self.optimizer.step(&mut self.params, &grads);
        self.iteration = next;
        Ok(StepRecord::new(next, loss, grad_norm))
    }

    /// Steps until `total_iterations`, handing every record to `on_step`.
    pub fn run(&mut self, mut on_step: impl FnMut(&StepRecord, &Self) -> Result<()>) -> Result<()> {
        while !self.is_finished() {
            let record = self.step()?;
            on_step(&record, self)?;
        }
        Ok(())
    }
}

/// Resamples every sample to `side × side`.
pub fn prepare(
    samples: &[FingerprintSample],
    side: usize,
    depth: usize,
) -> Result<Vec<FingerprintSample>> {
    samples.iter().map(|s| preprocess(s, side, depth)).collect()
}

/// Final state plus the per-step log of a finished run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<StepRecord>,
}

fn run_to_end(
    config: &TrainConfig,
    mode: TrainMode,
    source: &[FingerprintSample],
    target: &[FingerprintSample],
) -> Result<TrainOutcome> {
    config.validate()?;
    let source = prepare(source, config.input_side, config.depth)?;
    let target = prepare(target, config.input_side, config.depth)?;
    let mut trainer = Trainer::new(config.clone(), mode, &source, &target)?;
    let mut log = Vec::with_capacity(config.total_iterations as usize);
    trainer.run(|r, _| {
        log.push(r.clone());
        Ok(())
    })?;
    Ok(TrainOutcome {
        checkpoint: trainer.checkpoint(),
        log,
    })
}

/// Adversarially aligned training. Target masks, if any, are ignored.
pub fn train_ra_runet(
    config: &TrainConfig,
    source: &[FingerprintSample],
    target: &[FingerprintSample],
) -> Result<TrainOutcome> {
    run_to_end(config, TrainMode::Adversarial, source, target)
}

/// Segmentation-only training on the source set.
pub fn train_baseline(config: &TrainConfig, source: &[FingerprintSample]) -> Result<TrainOutcome> {
    run_to_end(config, TrainMode::Baseline, source, &[])
}
