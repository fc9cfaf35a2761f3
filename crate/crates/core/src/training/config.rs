use serde::{Deserialize, Serialize};

use crate::adversarial::{discriminated_iterations, DiscriminatorConfig};
use crate::backbone::BackboneConfig;
use crate::data::{validate_side, TargetProtocol};
use crate::nn::AdamConfig;
use crate::{Error, Result};

/// Every knob of a training run. Missing TOML keys fall back to the
/// defaults below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the adversarial term.
    pub alpha: f64,
    /// Refinement iterations `T`.
    #[serde(alias = "T")]
    pub iterations: usize,
    /// Discriminated iterations: 1 (final only) or `T`.
    #[serde(alias = "T_disc")]
    pub disc_iterations: usize,
    pub total_iterations: u64,
    pub per_domain_batch: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub input_side: usize,
    pub depth: usize,
    pub base_channels: usize,
    pub disc_conv_layers: usize,
    pub disc_hidden_width: usize,
    /// Save a checkpoint every this many steps; 0 keeps only the final one.
    pub checkpoint_every: u64,
    pub target_protocol: TargetProtocol,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            alpha: 1.0,
            iterations: 3,
            disc_iterations: 3,
            total_iterations: 5000,
            per_domain_batch: 2,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_eps: adam.eps,
            seed: 0,
            input_side: 256,
            depth: 4,
            base_channels: 16,
            disc_conv_layers: 3,
            disc_hidden_width: 64,
            checkpoint_every: 0,
            target_protocol: TargetProtocol::Transductive,
        }
    }
}

impl TrainConfig {
    /// Desk-scale preset for synthetic runs: 32-pixel inputs, a two-level
    /// backbone with four base channels, a narrow discriminator and a
    /// larger learning rate so a few hundred steps suffice.
    pub fn smoke() -> Self {
        Self {
            total_iterations: 300,
            learning_rate: 1e-3,
            input_side: 32,
            depth: 2,
            base_channels: 4,
            disc_hidden_width: 16,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "alpha must be finite and >= 0, got {}",
                self.alpha
            )));
        }
        discriminated_iterations(self.iterations, self.disc_iterations)?;
        if self.per_domain_batch == 0 {
            return Err(Error::Config("per_domain_batch must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || self.adam_eps <= 0.0
        {
            return Err(Error::Config(
                "Adam betas must lie in [0, 1) and eps be positive".into(),
            ));
        }
        validate_side(self.input_side, self.depth)?;
        self.backbone().validate()?;
        self.discriminator().validate()
    }

    pub fn backbone(&self) -> BackboneConfig {
        BackboneConfig::runet(self.depth, self.base_channels, self.iterations)
    }

    pub fn discriminator(&self) -> DiscriminatorConfig {
        DiscriminatorConfig {
            input_channels: self.backbone().bottleneck_channels(),
            conv_layers: self.disc_conv_layers,
            hidden_width: self.disc_hidden_width,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
