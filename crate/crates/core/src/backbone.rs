//! Segmentation backbones: a plain U-Net and the recurrent RUnet.
//!
//! RUnet splits into a feature extractor (`gf.*` parameters) and a
//! segmentation head (`sg.*`). At every iteration the extractor consumes
//! the image concatenated with the previous mask, passes its bottleneck
//! through a convolutional GRU whose hidden state carries over between
//! iterations, and the head decodes the GRU output with the encoder skips
//! into a refined mask. Weights are shared across iterations, so the
//! parameter count does not depend on the number of iterations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::validate_side;
use crate::nn::{self, conv, conv_spec, Bound, Graph, Init, NodeId, ParamStore, Tensor};
use crate::{Error, Result};

/// Prefix of feature-extractor parameters.
pub const EXTRACTOR_PREFIX: &str = "gf.";
/// Prefix of segmentation-head parameters.
pub const HEAD_PREFIX: &str = "sg.";

/// Value of the mask fed to the first iteration.
pub const INITIAL_MASK_VALUE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Unet,
    Runet,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    /// Number of pooling levels in the encoder.
    pub depth: usize,
    /// Channels at the first level; each level doubles it.
    pub base_channels: usize,
    /// Refinement iterations `T` (ignored by the plain U-Net).
    pub recurrent_iterations: usize,
    /// Planes consumed by the first convolution: image + previous mask for
    /// RUnet, image only for U-Net.
    pub in_channels: usize,
    pub variant: Variant,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self::runet(4, 16, 3)
    }
}

impl BackboneConfig {
    pub fn runet(depth: usize, base_channels: usize, iterations: usize) -> Self {
        Self {
            depth,
            base_channels,
            recurrent_iterations: iterations,
            in_channels: 2,
            variant: Variant::Runet,
        }
    }

    pub fn unet(depth: usize, base_channels: usize) -> Self {
        Self {
            depth,
            base_channels,
            recurrent_iterations: 1,
            in_channels: 1,
            variant: Variant::Unet,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Config("backbone depth must be at least 1".into()));
        }
        if self.base_channels == 0 {
            return Err(Error::Config("base_channels must be positive".into()));
        }
        match self.variant {
            Variant::Runet => {
                if self.recurrent_iterations == 0 {
                    return Err(Error::Config("RUnet needs at least one iteration".into()));
                }
                if self.in_channels != 2 {
                    return Err(Error::Config(format!(
                        "RUnet consumes image + mask (2 planes), got in_channels = {}",
                        self.in_channels
                    )));
                }
            }
            Variant::Unet => {
                if self.in_channels != 1 {
                    return Err(Error::Config(format!(
                        "U-Net consumes one image plane, got in_channels = {}",
                        self.in_channels
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn channels_at(&self, level: usize) -> usize {
        self.base_channels << level
    }

    pub fn bottleneck_channels(&self) -> usize {
        self.channels_at(self.depth)
    }

    /// Iterations actually run: `T` for RUnet, 1 for U-Net.
    pub fn iterations(&self) -> usize {
        match self.variant {
            Variant::Runet => self.recurrent_iterations,
            Variant::Unet => 1,
        }
    }
}

/// Bottleneck representation at one iteration, batched `n × C × h × w`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub values: Tensor,
    pub iteration: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentSegOutput {
    /// Sigmoid masks `n × 1 × H × W`, one per iteration.
    pub masks: Vec<Tensor>,
    /// Pre-sigmoid logits matching `masks`.
    pub logits: Vec<Tensor>,
    pub features: Vec<FeatureMap>,
    /// GRU state after the last iteration (`None` for U-Net).
    pub hidden_state: Option<Tensor>,
}

/// Graph nodes of one iteration.
#[derive(Clone, Debug)]
pub struct StepNodes {
    pub features: NodeId,
    pub logits: NodeId,
    pub mask: NodeId,
    pub state: Option<NodeId>,
    /// Post-activation output of every named layer.
    pub layers: BTreeMap<String, NodeId>,
}

#[derive(Clone, Debug)]
pub struct ForwardNodes {
    pub steps: Vec<StepNodes>,
}

impl ForwardNodes {
    pub fn last(&self) -> &StepNodes {
        self.steps.last().expect("at least one iteration")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Backbone {
    config: BackboneConfig,
}

/// Validates the config and draws its parameters from `seed`.
pub fn init_backbone(config: &BackboneConfig, seed: u64) -> Result<ParamStore> {
    Ok(Backbone::new(config.clone())?.init(seed))
}

impl Backbone {
    pub fn new(config: BackboneConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    pub fn param_specs(&self) -> Vec<(String, Vec<usize>, Init)> {
        let c = &self.config;
        let mut specs = Vec::new();
        let mut in_ch = c.in_channels;
        for level in 0..c.depth {
            let ch = c.channels_at(level);
            specs.extend(conv_spec(
                &format!("gf.enc{level}.conv1"),
                in_ch,
                ch,
                3,
                None,
            ));
            specs.extend(conv_spec(&format!("gf.enc{level}.conv2"), ch, ch, 3, None));
            in_ch = ch;
        }
        let cb = c.bottleneck_channels();
        specs.extend(conv_spec("gf.mid.conv1", in_ch, cb, 3, None));
        specs.extend(conv_spec("gf.mid.conv2", cb, cb, 3, None));
        if c.variant == Variant::Runet {
            let gate = Some(Init::Uniform {
                bound: (1.0 / (2 * cb * 9) as f64).sqrt(),
            });
            for gate_name in ["update", "reset", "candidate"] {
                specs.extend(conv_spec(
                    &format!("gf.gru.{gate_name}"),
                    2 * cb,
                    cb,
                    3,
                    gate,
                ));
            }
        }
        for level in (0..c.depth).rev() {
            let ch = c.channels_at(level);
            specs.extend(conv_spec(
                &format!("sg.dec{level}.up"),
                c.channels_at(level + 1),
                ch,
                3,
                None,
            ));
            specs.extend(conv_spec(
                &format!("sg.dec{level}.conv1"),
                2 * ch,
                ch,
                3,
                None,
            ));
            specs.extend(conv_spec(&format!("sg.dec{level}.conv2"), ch, ch, 3, None));
        }
        let head = Some(Init::Uniform {
            bound: (1.0 / c.base_channels as f64).sqrt(),
        });
        specs.extend(conv_spec("sg.head", c.base_channels, 1, 1, head));
        specs
    }

    pub fn init(&self, seed: u64) -> ParamStore {
        nn::init_params(&self.param_specs(), seed, 0)
    }

    /// Names of the layers whose activations can be inspected, in
    /// evaluation order.
    pub fn layer_names(&self) -> Vec<String> {
        let c = &self.config;
        let mut names = Vec::new();
        for level in 0..c.depth {
            names.push(format!("gf.enc{level}.conv1"));
            names.push(format!("gf.enc{level}.conv2"));
        }
        names.push("gf.mid.conv1".into());
        names.push("gf.mid.conv2".into());
        if c.variant == Variant::Runet {
            names.push("gf.gru".into());
        }
        for level in (0..c.depth).rev() {
            names.push(format!("sg.dec{level}.up"));
            names.push(format!("sg.dec{level}.conv1"));
            names.push(format!("sg.dec{level}.conv2"));
        }
        names.push("sg.head".into());
        names
    }

    /// Name of the last decoder convolution.
    pub fn last_decoder_layer(&self) -> String {
        "sg.dec0.conv2".into()
    }

    fn check_image(&self, shape: &[usize]) -> Result<(usize, usize)> {
        let (n, c, h, w) = match shape {
            [n, c, h, w] => (*n, *c, *h, *w),
            s => {
                return Err(Error::Shape(format!(
                    "expected n×1×H×W image batch, got {s:?}"
                )))
            }
        };
        if c != 1 {
            return Err(Error::Shape(format!(
                "expected single-channel images, got {c} channels"
            )));
        }
        if h != w {
            return Err(Error::Shape(format!("expected square inputs, got {h}×{w}")));
        }
        validate_side(h, self.config.depth)?;
        Ok((n, h))
    }

    /// Encoder + bottleneck (+ GRU) on an already assembled input.
    fn extract(
        &self,
        g: &mut Graph,
        p: &Bound,
        input: NodeId,
        state: Option<NodeId>,
        layers: &mut BTreeMap<String, NodeId>,
    ) -> Result<(NodeId, Vec<NodeId>, Option<NodeId>)> {
        let c = &self.config;
        let got = g.shape(input)[1];
        if got != c.in_channels {
            return Err(Error::Shape(format!(
                "feature extractor consumes {} planes, got {got}",
                c.in_channels
            )));
        }
        let mut x = input;
        let mut skips = Vec::with_capacity(c.depth);
        let mut record = |g: &mut Graph, name: String, x: NodeId| -> NodeId {
            let y = g.relu(x);
            layers.insert(name, y);
            y
        };
        for level in 0..c.depth {
            let a = conv(g, p, &format!("gf.enc{level}.conv1"), x, 1, 1);
            let a = record(g, format!("gf.enc{level}.conv1"), a);
            let b = conv(g, p, &format!("gf.enc{level}.conv2"), a, 1, 1);
            let b = record(g, format!("gf.enc{level}.conv2"), b);
            skips.push(b);
            x = g.max_pool2(b);
        }
        let m = conv(g, p, "gf.mid.conv1", x, 1, 1);
        let m = record(g, "gf.mid.conv1".into(), m);
        let m = conv(g, p, "gf.mid.conv2", m, 1, 1);
        let m = record(g, "gf.mid.conv2".into(), m);
        if c.variant == Variant::Unet {
            return Ok((m, skips, None));
        }
        let h = match state {
            Some(h) => h,
            None => g.constant(Tensor::zeros(g.shape(m).to_vec())),
        };
        let xh = g.concat_channels(m, h);
        let z = conv(g, p, "gf.gru.update", xh, 1, 1);
        let z = g.sigmoid(z);
        let r = conv(g, p, "gf.gru.reset", xh, 1, 1);
        let r = g.sigmoid(r);
        let rh = g.mul(r, h);
        let xrh = g.concat_channels(m, rh);
        let n = conv(g, p, "gf.gru.candidate", xrh, 1, 1);
        let n = g.tanh(n);
        let delta = g.sub(n, h);
        let zd = g.mul(z, delta);
        let h_next = g.add(h, zd);
        layers.insert("gf.gru".into(), h_next);
        Ok((h_next, skips, Some(h_next)))
    }

    /// Decoder with skip connections; returns the mask logits.
    fn segment(
        &self,
        g: &mut Graph,
        p: &Bound,
        features: NodeId,
        skips: &[NodeId],
        layers: &mut BTreeMap<String, NodeId>,
    ) -> NodeId {
        let mut x = features;
        for level in (0..self.config.depth).rev() {
            let u = g.upsample2(x);
            let u = conv(g, p, &format!("sg.dec{level}.up"), u, 1, 1);
            let u = g.relu(u);
            layers.insert(format!("sg.dec{level}.up"), u);
            let cat = g.concat_channels(u, skips[level]);
            let a = conv(g, p, &format!("sg.dec{level}.conv1"), cat, 1, 1);
            let a = g.relu(a);
            layers.insert(format!("sg.dec{level}.conv1"), a);
            let b = conv(g, p, &format!("sg.dec{level}.conv2"), a, 1, 1);
            let b = g.relu(b);
            layers.insert(format!("sg.dec{level}.conv2"), b);
            x = b;
        }
        let logits = conv(g, p, "sg.head", x, 1, 0);
        layers.insert("sg.head".into(), logits);
        logits
    }

    /// One refinement iteration on the graph. `prev_mask` is required for
    /// RUnet and ignored by U-Net.
    pub fn step_graph(
        &self,
        g: &mut Graph,
        p: &Bound,
        image: NodeId,
        prev_mask: Option<NodeId>,
        state: Option<NodeId>,
    ) -> Result<StepNodes> {
        self.check_image(g.shape(image))?;
        let input = match (self.config.variant, prev_mask) {
            (Variant::Runet, Some(m)) => {
                if g.shape(m) != g.shape(image) {
                    return Err(Error::Shape(format!(
                        "previous mask {:?} vs image {:?}",
                        g.shape(m),
                        g.shape(image)
                    )));
                }
                g.concat_channels(image, m)
            }
            (Variant::Runet, None) => {
                return Err(Error::Shape(
                    "RUnet iteration needs the previous mask".into(),
                ))
            }
            (Variant::Unet, _) => image,
        };
        let mut layers = BTreeMap::new();
        let (features, skips, state) = self.extract(g, p, input, state, &mut layers)?;
        let logits = self.segment(g, p, features, &skips, &mut layers);
        let mask = g.sigmoid(logits);
        Ok(StepNodes {
            features,
            logits,
            mask,
            state,
            layers,
        })
    }

    /// Runs `iterations` refinement steps starting from a constant 0.5 mask.
    pub fn forward_graph(
        &self,
        g: &mut Graph,
        p: &Bound,
        image: NodeId,
        iterations: usize,
    ) -> Result<ForwardNodes> {
        if iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        let iterations = if self.config.variant == Variant::Unet {
            1
        } else {
            iterations
        };
        let mut mask = g.constant(Tensor::full(g.shape(image).to_vec(), INITIAL_MASK_VALUE));
        let mut state = None;
        let mut steps = Vec::with_capacity(iterations);
        for _ in 0..iterations {
            let s = self.step_graph(g, p, image, Some(mask), state)?;
            mask = s.mask;
            state = s.state;
            steps.push(s);
        }
        Ok(ForwardNodes { steps })
    }

    /// One iteration on plain tensors: returns the bottleneck features, the
    /// refined mask and the next recurrent state.
    pub fn step(
        &self,
        params: &ParamStore,
        image: &Tensor,
        prev_mask: &Tensor,
        state: Option<&Tensor>,
    ) -> Result<(FeatureMap, Tensor, Option<Tensor>)> {
        let mut g = Graph::inference();
        let p = g.bind(params);
        let x = g.constant(image.clone());
        let m = g.constant(prev_mask.clone());
        let s = state.map(|s| g.constant(s.clone()));
        let out = self.step_graph(&mut g, &p, x, Some(m), s)?;
        Ok((
            FeatureMap {
                values: g.value(out.features).clone(),
                iteration: 1,
            },
            g.value(out.mask).clone(),
            out.state.map(|s| g.value(s).clone()),
        ))
    }

    /// Full recurrent forward pass on plain tensors.
    pub fn forward(
        &self,
        params: &ParamStore,
        image: &Tensor,
        iterations: usize,
    ) -> Result<RecurrentSegOutput> {
        let mut g = Graph::inference();
        let p = g.bind(params);
        let x = g.constant(image.clone());
        let out = self.forward_graph(&mut g, &p, x, iterations)?;
        Ok(RecurrentSegOutput {
            masks: out.steps.iter().map(|s| g.value(s.mask).clone()).collect(),
            logits: out
                .steps
                .iter()
                .map(|s| g.value(s.logits).clone())
                .collect(),
            features: out
                .steps
                .iter()
                .enumerate()
                .map(|(t, s)| FeatureMap {
                    values: g.value(s.features).clone(),
                    iteration: t + 1,
                })
                .collect(),
            hidden_state: out.last().state.map(|s| g.value(s).clone()),
        })
    }

    /// Plain U-Net forward: a single probability mask.
    pub fn unet_forward(&self, params: &ParamStore, image: &Tensor) -> Result<Tensor> {
        if self.config.variant != Variant::Unet {
            return Err(Error::Config("unet_forward needs a U-Net backbone".into()));
        }
        Ok(self.forward(params, image, 1)?.masks.remove(0))
    }
}
