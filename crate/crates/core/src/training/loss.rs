use serde::{Deserialize, Serialize};

use crate::adversarial::{
    adversarial_loss_graph, discriminated_iterations, Discriminator, GrlSpec,
};
use crate::backbone::{Backbone, ForwardNodes};
use crate::data::DomainBatch;
use crate::nn::{Bound, Graph, NodeId, Tensor};
use crate::{Error, Result};

/// Probability clamp applied before taking logarithms.
pub const SEG_EPS: f64 = 1e-7;

/// Mean pixel-wise binary cross-entropy between a probability map and a
/// binary ground truth of the same shape.
pub fn segmentation_loss(mask: &Tensor, truth: &Tensor) -> Result<f64> {
    if mask.shape() != truth.shape() {
        return Err(Error::Shape(format!(
            "mask {:?} vs ground truth {:?}",
            mask.shape(),
            truth.shape()
        )));
    }
    if !mask.all_finite() {
        return Err(Error::Invalid(
            "mask contains NaN or infinite values".into(),
        ));
    }
    if truth.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Invalid("ground truth is not binary".into()));
    }
    let mut g = Graph::inference();
    let m = g.constant(mask.clone());
    let loss = g.bce_prob(m, truth.clone(), SEG_EPS);
    Ok(g.value(loss).item())
}

/// Per-iteration loss terms of one step and the combined objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub seg_by_iter: Vec<f64>,
    /// One value per discriminated iteration; empty without a target stream.
    pub adv_by_iter: Vec<f64>,
    pub total: f64,
}

/// `(1/T) Σ_t [seg_t − α·adv_t]`, where `adv_t` is zero for iterations that
/// are not discriminated. `adv_by_iter` holds either `T` values, a single
/// value for the final iteration, or nothing.
pub fn total_loss(
    seg_by_iter: &[f64],
    adv_by_iter: &[f64],
    alpha: f64,
    iterations: usize,
) -> Result<LossBreakdown> {
    if iterations == 0 || seg_by_iter.len() != iterations {
        return Err(Error::Invalid(format!(
            "expected {iterations} segmentation terms, got {}",
            seg_by_iter.len()
        )));
    }
    let mut adv = vec![0.0; iterations];
    if !adv_by_iter.is_empty() {
        let slots = discriminated_iterations(iterations, adv_by_iter.len()).map_err(|_| {
            Error::Invalid(format!(
                "expected 1 or {iterations} adversarial terms, got {}",
                adv_by_iter.len()
            ))
        })?;
        for (slot, &v) in slots.into_iter().zip(adv_by_iter) {
            adv[slot] = v;
        }
    }
    let sum: f64 = seg_by_iter
        .iter()
        .zip(&adv)
        .map(|(s, a)| s - alpha * a)
        .sum();
    Ok(LossBreakdown {
        seg_by_iter: seg_by_iter.to_vec(),
        adv_by_iter: adv_by_iter.to_vec(),
        total: sum / iterations as f64,
    })
}

/// How the adversarial term enters the differentiated graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjectiveForm {
    /// `(1/T) Σ [seg_t + α·adv_t]` with a reversal layer between the
    /// features and the discriminator. Descending it moves θ_d down the
    /// classification loss and θ_f, θ_s down `seg − α·adv`, i.e. one
    /// descent step realizes both the minimization over θ_f, θ_s and the
    /// maximization over θ_d of the total loss.
    Reversed,
    /// The total loss `(1/T) Σ [seg_t − α·adv_t]` as written, without a
    /// reversal layer.
    Literal,
}

/// Nodes of one step's loss graph.
#[derive(Clone, Debug)]
pub struct LossNodes {
    pub seg: Vec<NodeId>,
    pub adv: Vec<NodeId>,
    pub objective: NodeId,
    pub source: ForwardNodes,
    pub target: Option<ForwardNodes>,
}

impl LossNodes {
    pub fn breakdown(&self, g: &Graph, alpha: f64) -> Result<LossBreakdown> {
        let seg: Vec<f64> = self.seg.iter().map(|&n| g.value(n).item()).collect();
        let adv: Vec<f64> = self.adv.iter().map(|&n| g.value(n).item()).collect();
        total_loss(&seg, &adv, alpha, seg.len())
    }
}

/// Builds the loss graph of one batch. Without a discriminator or target
/// images only the segmentation term is present.
#[allow(clippy::too_many_arguments)]
pub fn build_objective(
    g: &mut Graph,
    p: &Bound,
    backbone: &Backbone,
    discriminator: Option<&Discriminator>,
    batch: &DomainBatch,
    alpha: f64,
    disc_iterations: usize,
    form: ObjectiveForm,
) -> Result<LossNodes> {
    let iterations = backbone.config().iterations();
    let x_src = g.constant(batch.source_images.clone());
    let source = backbone.forward_graph(g, p, x_src, iterations)?;
    let seg: Vec<NodeId> = source
        .steps
        .iter()
        .map(|s| g.bce_prob(s.mask, batch.source_masks.clone(), SEG_EPS))
        .collect();
    let seg_sum = sum_nodes(g, &seg);
    let seg_part = g.scale(seg_sum, 1.0 / iterations as f64);

    let (Some(disc), Some(target_images)) = (discriminator, batch.target_images.as_ref()) else {
        return Ok(LossNodes {
            seg,
            adv: Vec::new(),
            objective: seg_part,
            source,
            target: None,
        });
    };
    let x_tgt = g.constant(target_images.clone());
    let target = backbone.forward_graph(g, p, x_tgt, iterations)?;
    let grl = match form {
        ObjectiveForm::Reversed => Some(GrlSpec::default()),
        ObjectiveForm::Literal => None,
    };
    let mut adv = Vec::with_capacity(disc_iterations);
    for t in discriminated_iterations(iterations, disc_iterations)? {
        let (fs, ft) = (source.steps[t].features, target.steps[t].features);
        adv.push(adversarial_loss_graph(g, p, disc, fs, ft, grl)?);
    }
    let adv_sum = sum_nodes(g, &adv);
    let adv_part = g.scale(adv_sum, alpha / iterations as f64);
    let objective = match form {
        ObjectiveForm::Reversed => g.add(seg_part, adv_part),
        ObjectiveForm::Literal => g.sub(seg_part, adv_part),
    };
    Ok(LossNodes {
        seg,
        adv,
        objective,
        source,
        target: Some(target),
    })
}

fn sum_nodes(g: &mut Graph, nodes: &[NodeId]) -> NodeId {
    let mut acc = nodes[0];
    for &n in &nodes[1..] {
        acc = g.add(acc, n);
    }
    acc
}
