//! Gradient reversal and the recurrent sensor discriminator.
//!
//! The discriminator classifies bottleneck feature maps as coming from the
//! source (label 0) or target (label 1) sensor. One set of weights is
//! applied to the features of every discriminated iteration.

use serde::{Deserialize, Serialize};

use crate::backbone::FeatureMap;
use crate::nn::{self, conv, conv_spec, Bound, Graph, Init, NodeId, ParamStore, Tensor};
use crate::{Error, Result};

/// Prefix of discriminator parameters.
pub const DISCRIMINATOR_PREFIX: &str = "d.";

/// Negative slope of the discriminator activations.
const LEAKY_SLOPE: f64 = 0.2;

/// Gradient reversal strength.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrlSpec {
    pub lambda: f64,
}

impl Default for GrlSpec {
    fn default() -> Self {
        Self { lambda: 1.0 }
    }
}

/// Identity on the forward pass; multiplies the incoming gradient by
/// `-lambda` on the backward pass.
pub fn grad_reverse(g: &mut Graph, x: NodeId, spec: GrlSpec) -> Result<NodeId> {
    if !(spec.lambda >= 0.0 && spec.lambda.is_finite()) {
        return Err(Error::Config(format!(
            "GRL lambda must be finite and >= 0, got {}",
            spec.lambda
        )));
    }
    Ok(g.grad_reverse(x, spec.lambda))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    /// Channels of the incoming feature maps (the bottleneck width).
    pub input_channels: usize,
    /// Number of stride-2 convolutions before pooling.
    pub conv_layers: usize,
    pub hidden_width: usize,
}

impl DiscriminatorConfig {
    pub fn new(input_channels: usize) -> Self {
        Self {
            input_channels,
            conv_layers: 3,
            hidden_width: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.conv_layers == 0 || self.hidden_width == 0 {
            return Err(Error::Config(format!(
                "degenerate discriminator config {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    config: DiscriminatorConfig,
}

impl Discriminator {
    pub fn new(config: DiscriminatorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    pub fn param_specs(&self) -> Vec<(String, Vec<usize>, Init)> {
        let c = &self.config;
        let mut specs = Vec::new();
        let mut in_ch = c.input_channels;
        for i in 1..=c.conv_layers {
            specs.extend(conv_spec(
                &format!("d.conv{i}"),
                in_ch,
                c.hidden_width,
                3,
                None,
            ));
            in_ch = c.hidden_width;
        }
        let bound = (1.0 / c.hidden_width as f64).sqrt();
        specs.push((
            "d.fc.weight".into(),
            vec![1, c.hidden_width],
            Init::Uniform { bound },
        ));
        specs.push(("d.fc.bias".into(), vec![1], Init::Zeros));
        specs
    }

    /// Draws θ_d from `seed` on a stream separate from the backbone's.
    pub fn init(&self, seed: u64) -> ParamStore {
        nn::init_params(&self.param_specs(), seed, 1)
    }

    /// `n × C × h × w` features to `n × 1` logits.
    pub fn forward_graph(&self, g: &mut Graph, p: &Bound, features: NodeId) -> Result<NodeId> {
        let shape = g.shape(features);
        if shape.len() != 4 || shape[1] != self.config.input_channels {
            return Err(Error::Shape(format!(
                "discriminator expects n×{}×h×w features, got {shape:?}",
                self.config.input_channels
            )));
        }
        let mut x = features;
        for i in 1..=self.config.conv_layers {
            let y = conv(g, p, &format!("d.conv{i}"), x, 2, 1);
            x = g.leaky_relu(y, LEAKY_SLOPE);
        }
        let pooled = g.global_avg_pool(x);
        Ok(g.linear(pooled, p.get("d.fc.weight"), Some(p.get("d.fc.bias"))))
    }

    /// One logit per sample of `features`.
    pub fn forward(&self, params: &ParamStore, features: &FeatureMap) -> Result<Vec<f64>> {
        let mut g = Graph::inference();
        let p = g.bind(params);
        let f = g.constant(features.values.clone());
        let out = self.forward_graph(&mut g, &p, f)?;
        Ok(g.value(out).data().to_vec())
    }
}

/// Validates the config and draws θ_d.
pub fn init_discriminator(config: &DiscriminatorConfig, seed: u64) -> Result<ParamStore> {
    Ok(Discriminator::new(config.clone())?.init(seed))
}

/// Zero-based iterations whose features are discriminated: all of them, or
/// only the final one when `disc_iterations == 1`.
pub fn discriminated_iterations(iterations: usize, disc_iterations: usize) -> Result<Vec<usize>> {
    if iterations == 0 {
        return Err(Error::Config("iterations must be at least 1".into()));
    }
    if disc_iterations == iterations {
        Ok((0..iterations).collect())
    } else if disc_iterations == 1 {
        Ok(vec![iterations - 1])
    } else {
        Err(Error::Config(format!(
            "discriminated iterations must be 1 or {iterations}, got {disc_iterations}"
        )))
    }
}

/// Domain labels for a concatenated `[source; target]` batch.
pub fn domain_labels(source: usize, target: usize) -> Vec<f64> {
    let mut labels = vec![0.0; source + target];
    labels[source..].fill(1.0);
    labels
}

/// Graph form of one iteration's adversarial loss: discriminates the
/// concatenated source and target features and returns the batch-mean
/// binary cross-entropy. `grl` inserts a reversal layer in front of the
/// discriminator.
pub fn adversarial_loss_graph(
    g: &mut Graph,
    p: &Bound,
    disc: &Discriminator,
    source_features: NodeId,
    target_features: NodeId,
    grl: Option<GrlSpec>,
) -> Result<NodeId> {
    let (ns, nt) = (g.shape(source_features)[0], g.shape(target_features)[0]);
    let both = g.concat_batch(source_features, target_features);
    let input = match grl {
        Some(spec) => grad_reverse(g, both, spec)?,
        None => both,
    };
    let logits = disc.forward_graph(g, p, input)?;
    Ok(g.bce_logits(logits, domain_labels(ns, nt)))
}

/// Per-iteration adversarial loss from `(source logits, target logits)`
/// pairs: binary cross-entropy averaged over the source and target samples.
pub fn adversarial_loss(logits_by_iter: &[(Vec<f64>, Vec<f64>)]) -> Result<Vec<f64>> {
    if logits_by_iter.is_empty() {
        return Err(Error::Invalid(
            "adversarial loss needs at least one iteration".into(),
        ));
    }
    logits_by_iter
        .iter()
        .map(|(src, tgt)| {
            if src.is_empty() || tgt.is_empty() {
                return Err(Error::Invalid("empty source or target logits".into()));
            }
            let mut g = Graph::inference();
            let z: Vec<f64> = src.iter().chain(tgt).copied().collect();
            let node = g.constant(Tensor::new(vec![z.len()], z));
            let loss = g.bce_logits(node, domain_labels(src.len(), tgt.len()));
            Ok(g.value(loss).item())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bce_oracle(z: f64, y: f64) -> f64 {
        let p = 1.0 / (1.0 + (-z).exp());
        -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
    }

    #[test]
    fn grl_is_identity_forward_and_negates_backward() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::new(vec![2], vec![1.0, -2.5]));
        let y = grad_reverse(&mut g, x, GrlSpec::default()).unwrap();
        assert_eq!(g.value(y).data(), [1.0, -2.5]);
        let loss = g.weighted_sum(y, Tensor::new(vec![2], vec![0.3, -0.7]));
        let grads = g.backward(loss);
        assert_eq!(grads.get(x).unwrap().data(), [-0.3, 0.7]);
        assert!(grad_reverse(&mut g, x, GrlSpec { lambda: -1.0 }).is_err());
    }

    #[test]
    fn batch_of_features_gives_one_logit_each_and_zero_fc_gives_half() {
        let disc = Discriminator::new(DiscriminatorConfig::new(8)).unwrap();
        let mut params = disc.init(0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = FeatureMap {
            values: Tensor::new(
                vec![3, 8, 4, 4],
                (0..3 * 8 * 16)
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect(),
            ),
            iteration: 1,
        };
        assert_eq!(disc.forward(&params, &f).unwrap().len(), 3);
        params.get_mut("d.fc.weight").unwrap().data_mut().fill(0.0);
        let logits = disc.forward(&params, &f).unwrap();
        assert!(logits.iter().all(|&z| z == 0.0));
        assert_eq!(nn::sigmoid(logits[0]), 0.5);
        let wrong = FeatureMap {
            values: Tensor::zeros(vec![1, 4, 4, 4]),
            iteration: 1,
        };
        assert!(matches!(
            disc.forward(&params, &wrong),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn loss_limits_and_scalar_oracle() {
        let sat = adversarial_loss(&[(vec![-20.0, -20.0], vec![20.0, 20.0])]).unwrap();
        assert!(sat[0] < 1e-8);
        let zero = adversarial_loss(&vec![(vec![0.0; 2], vec![0.0; 2]); 3]).unwrap();
        assert_eq!(zero.len(), 3);
        for v in zero {
            assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let src: Vec<f64> = (0..3).map(|_| rng.random_range(-6.0..6.0)).collect();
            let tgt: Vec<f64> = (0..3).map(|_| rng.random_range(-6.0..6.0)).collect();
            let got = adversarial_loss(&[(src.clone(), tgt.clone())]).unwrap()[0];
            let want = (src.iter().map(|&z| bce_oracle(z, 0.0)).sum::<f64>()
                + tgt.iter().map(|&z| bce_oracle(z, 1.0)).sum::<f64>())
                / 6.0;
            assert!((got - want).abs() < 1e-10);
        }
        assert!(adversarial_loss(&[]).is_err());
    }

    #[test]
    fn loss_is_permutation_invariant_within_each_domain() {
        let a = adversarial_loss(&[(vec![0.3, -1.2, 2.0], vec![0.1, 4.0, -0.5])]).unwrap();
        let b = adversarial_loss(&[(vec![2.0, 0.3, -1.2], vec![-0.5, 0.1, 4.0])]).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-12);
    }

    #[test]
    fn iteration_selection() {
        assert_eq!(discriminated_iterations(3, 3).unwrap(), [0, 1, 2]);
        assert_eq!(discriminated_iterations(3, 1).unwrap(), [2]);
        assert!(discriminated_iterations(3, 2).is_err());
    }
}
