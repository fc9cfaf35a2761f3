//! Reverse-mode automatic differentiation over a flat tape.
//!
//! Nodes are appended in evaluation order, so a reverse sweep over the
//! tape visits every node after all of its consumers.

use super::kernels::{self, ConvGeom};
use super::tensor::Tensor;
use super::ParamStore;
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    /// `1 - x`
    OneMinus(NodeId),
    Conv2d {
        input: NodeId,
        weight: NodeId,
        bias: Option<NodeId>,
        geom: ConvGeom,
    },
    Linear {
        input: NodeId,
        weight: NodeId,
        bias: Option<NodeId>,
    },
    Relu(NodeId),
    LeakyRelu(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    MaxPool2(NodeId),
    Upsample2(NodeId),
    ConcatChannels(NodeId, NodeId),
    ConcatBatch(NodeId, NodeId),
    NarrowBatch(NodeId, usize),
    GlobalAvgPool(NodeId),
    SumAll(NodeId),
    MeanAll(NodeId),
    /// Weighted sum `Σ x·w` against a constant weight tensor.
    WeightedSum(NodeId, Tensor),
    /// Mean binary cross-entropy of probabilities against constant targets.
    BceProb {
        prob: NodeId,
        target: Tensor,
        eps: f64,
    },
    /// Mean binary cross-entropy of logits against constant labels.
    BceLogits {
        logits: NodeId,
        labels: Vec<f64>,
    },
    GradReverse(NodeId, f64),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// A computation tape. Construct with [`Graph::new`] for training or
/// [`Graph::inference`] when no gradients are needed.
pub struct Graph {
    nodes: Vec<Node>,
    grad_enabled: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

/// Parameter tensors of a [`ParamStore`] registered on a graph.
#[derive(Clone, Debug, Default)]
pub struct Bound {
    ids: BTreeMap<String, NodeId>,
}

impl Bound {
    pub fn get(&self, name: &str) -> NodeId {
        *self
            .ids
            .get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` is not bound"))
    }

    pub fn try_get(&self, name: &str) -> Option<NodeId> {
        self.ids.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.ids.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl Graph {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grad_enabled: true,
        }
    }

    pub fn inference() -> Self {
        Self {
            nodes: Vec::new(),
            grad_enabled: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[NodeId]) -> NodeId {
        let needs_grad = self.grad_enabled && inputs.iter().any(|i| self.nodes[i.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// A leaf that gradients do not flow into.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// A leaf whose gradient is collected by [`Graph::backward`].
    pub fn variable(&mut self, value: Tensor) -> NodeId {
        let needs_grad = self.grad_enabled;
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Registers every tensor of `store` as a variable.
    pub fn bind(&mut self, store: &ParamStore) -> Bound {
        let ids = store
            .iter()
            .map(|(name, t)| (name.to_string(), self.variable(t.clone())))
            .collect();
        Bound { ids }
    }

    fn binary_same_shape(&self, a: NodeId, b: NodeId, what: &str) {
        assert_eq!(
            self.shape(a),
            self.shape(b),
            "{what}: operand shapes differ"
        );
    }

    fn zip_with(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (va, vb) = (self.value(a), self.value(b));
        Tensor::new(
            va.shape().to_vec(),
            va.data()
                .iter()
                .zip(vb.data())
                .map(|(&x, &y)| f(x, y))
                .collect(),
        )
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary_same_shape(a, b, "add");
        let v = self.zip_with(a, b, |x, y| x + y);
        self.push(v, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary_same_shape(a, b, "sub");
        let v = self.zip_with(a, b, |x, y| x - y);
        self.push(v, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary_same_shape(a, b, "mul");
        let v = self.zip_with(a, b, |x, y| x * y);
        self.push(v, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s), &[a])
    }

    pub fn one_minus(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| 1.0 - x);
        self.push(v, Op::OneMinus(a), &[a])
    }

    /// 2-D convolution. `input` is `n × C × H × W`, `weight` is `O × C × k × k`,
    /// `bias` (optional) is `O`.
    pub fn conv2d(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: Option<NodeId>,
        stride: usize,
        pad: usize,
    ) -> NodeId {
        let (n, c, h, w) = self.value(input).dims4();
        let (o, wc, k, k2) = self.value(weight).dims4();
        assert_eq!(k, k2, "conv2d: non-square kernel");
        assert_eq!(
            c, wc,
            "conv2d: input has {c} channels but the kernel expects {wc}"
        );
        if let Some(b) = bias {
            assert_eq!(self.shape(b), [o], "conv2d: bias shape");
        }
        let geom = ConvGeom {
            channels: c,
            height: h,
            width: w,
            kernel: k,
            stride,
            pad,
        };
        let out = kernels::conv2d_forward(
            self.value(input).data(),
            n,
            &geom,
            self.value(weight).data(),
            o,
            bias.map(|b| self.value(b).data()),
        );
        let v = Tensor::new(vec![n, o, geom.out_height(), geom.out_width()], out);
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        self.push(
            v,
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            },
            &inputs,
        )
    }

    /// Affine map `x · Wᵀ + b` for `x` of shape `n × k` and `W` of shape `o × k`.
    pub fn linear(&mut self, input: NodeId, weight: NodeId, bias: Option<NodeId>) -> NodeId {
        let (n, k) = match self.shape(input) {
            [n, k] => (*n, *k),
            s => panic!("linear: expected 2-D input, got {s:?}"),
        };
        let (o, wk) = match self.shape(weight) {
            [o, wk] => (*o, *wk),
            s => panic!("linear: expected 2-D weight, got {s:?}"),
        };
        assert_eq!(k, wk, "linear: input width {k} vs weight width {wk}");
        let mut out = vec![0.0; n * o];
        kernels::gemm(
            n,
            k,
            o,
            self.value(input).data(),
            false,
            self.value(weight).data(),
            true,
            0.0,
            &mut out,
        );
        if let Some(b) = bias {
            let bv = self.value(b).data();
            for row in out.chunks_mut(o) {
                row.iter_mut().zip(bv).for_each(|(v, b)| *v += b);
            }
        }
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        self.push(
            Tensor::new(vec![n, o], out),
            Op::Linear {
                input,
                weight,
                bias,
            },
            &inputs,
        )
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a), &[a])
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> NodeId {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push(v, Op::LeakyRelu(a, slope), &[a])
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a), &[a])
    }

    pub fn max_pool2(&mut self, a: NodeId) -> NodeId {
        let (n, c, h, w) = self.value(a).dims4();
        assert!(
            h % 2 == 0 && w % 2 == 0,
            "max_pool2: odd spatial size {h}×{w}"
        );
        let out = kernels::max_pool2(self.value(a).data(), n * c, h, w);
        self.push(
            Tensor::new(vec![n, c, h / 2, w / 2], out),
            Op::MaxPool2(a),
            &[a],
        )
    }

    pub fn upsample2(&mut self, a: NodeId) -> NodeId {
        let (n, c, h, w) = self.value(a).dims4();
        let out = kernels::upsample_nearest2(self.value(a).data(), n * c, h, w);
        self.push(
            Tensor::new(vec![n, c, 2 * h, 2 * w], out),
            Op::Upsample2(a),
            &[a],
        )
    }

    pub fn concat_channels(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (n, ca, h, w) = self.value(a).dims4();
        let (nb, cb, hb, wb) = self.value(b).dims4();
        assert_eq!((n, h, w), (nb, hb, wb), "concat_channels: shapes differ");
        let plane = h * w;
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(n * (ca + cb) * plane);
        for s in 0..n {
            out.extend_from_slice(&va[s * ca * plane..(s + 1) * ca * plane]);
            out.extend_from_slice(&vb[s * cb * plane..(s + 1) * cb * plane]);
        }
        self.push(
            Tensor::new(vec![n, ca + cb, h, w], out),
            Op::ConcatChannels(a, b),
            &[a, b],
        )
    }

    pub fn concat_batch(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = Tensor::concat_batch(&[self.value(a), self.value(b)]);
        self.push(v, Op::ConcatBatch(a, b), &[a, b])
    }

    /// Samples `start..start + len` of the leading axis.
    pub fn narrow_batch(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let src = self.value(a);
        let n = src.shape()[0];
        assert!(start + len <= n, "narrow_batch: {start}+{len} > {n}");
        let stride = src.len() / n;
        let mut shape = src.shape().to_vec();
        shape[0] = len;
        let v = Tensor::new(
            shape,
            src.data()[start * stride..(start + len) * stride].to_vec(),
        );
        self.push(v, Op::NarrowBatch(a, start), &[a])
    }

    /// `n × C × H × W → n × C` spatial mean.
    pub fn global_avg_pool(&mut self, a: NodeId) -> NodeId {
        let (n, c, h, w) = self.value(a).dims4();
        let plane = (h * w) as f64;
        let out = self
            .value(a)
            .data()
            .chunks(h * w)
            .map(|p| p.iter().sum::<f64>() / plane)
            .collect();
        self.push(Tensor::new(vec![n, c], out), Op::GlobalAvgPool(a), &[a])
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::SumAll(a), &[a])
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let src = self.value(a);
        let v = Tensor::scalar(src.sum() / src.len() as f64);
        self.push(v, Op::MeanAll(a), &[a])
    }

    pub fn weighted_sum(&mut self, a: NodeId, weights: Tensor) -> NodeId {
        assert_eq!(
            self.shape(a),
            weights.shape(),
            "weighted_sum: shapes differ"
        );
        let v = Tensor::scalar(
            self.value(a)
                .data()
                .iter()
                .zip(weights.data())
                .map(|(x, w)| x * w)
                .sum(),
        );
        self.push(v, Op::WeightedSum(a, weights), &[a])
    }

    /// Mean over all elements of `-(g ln p + (1-g) ln(1-p))` with `p`
    /// clamped to `[eps, 1-eps]`.
    pub fn bce_prob(&mut self, prob: NodeId, target: Tensor, eps: f64) -> NodeId {
        assert_eq!(self.shape(prob), target.shape(), "bce_prob: shapes differ");
        let p = self.value(prob);
        let n = p.len() as f64;
        let total: f64 = p
            .data()
            .iter()
            .zip(target.data())
            .map(|(&p, &g)| bce_term(p.clamp(eps, 1.0 - eps), g))
            .sum();
        self.push(
            Tensor::scalar(total / n),
            Op::BceProb { prob, target, eps },
            &[prob],
        )
    }

    /// Mean binary cross-entropy of `logits` (any shape) against `labels`,
    /// computed in the overflow-free softplus form.
    pub fn bce_logits(&mut self, logits: NodeId, labels: Vec<f64>) -> NodeId {
        let z = self.value(logits);
        assert_eq!(z.len(), labels.len(), "bce_logits: label count");
        let total: f64 = z
            .data()
            .iter()
            .zip(&labels)
            .map(|(&z, &y)| bce_logit_term(z, y))
            .sum();
        let v = Tensor::scalar(total / labels.len() as f64);
        self.push(v, Op::BceLogits { logits, labels }, &[logits])
    }

    /// Gradient reversal: identity forward, gradient scaled by `-lambda`
    /// on the way back.
    pub fn grad_reverse(&mut self, a: NodeId, lambda: f64) -> NodeId {
        assert!(lambda >= 0.0, "grad_reverse: lambda must be non-negative");
        let v = self.value(a).clone();
        self.push(v, Op::GradReverse(a, lambda), &[a])
    }

    /// Reverse sweep from the scalar `loss`.
    pub fn backward(&self, loss: NodeId) -> Gradients {
        assert_eq!(self.value(loss).len(), 1, "backward: loss must be a scalar");
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        if !self.nodes[loss.0].needs_grad {
            return Gradients { grads };
        }
        grads[loss.0] = Some(Tensor::full(self.shape(loss).to_vec(), 1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        match &mut grads[id.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                if self.wants(*b) {
                    self.accumulate(grads, *b, g.map(|v| -v));
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    let t = zip(g, self.value(*b), |g, y| g * y);
                    self.accumulate(grads, *a, t);
                }
                if self.wants(*b) {
                    let t = zip(g, self.value(*a), |g, x| g * x);
                    self.accumulate(grads, *b, t);
                }
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, g.map(|v| v * s)),
            Op::OneMinus(a) => self.accumulate(grads, *a, g.map(|v| -v)),
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            } => {
                let x = self.value(*input);
                let w = self.value(*weight);
                let (n, _, _, _) = x.dims4();
                let (o, _, _, _) = w.dims4();
                let r = kernels::conv2d_backward(
                    x.data(),
                    n,
                    geom,
                    w.data(),
                    o,
                    g.data(),
                    self.wants(*input),
                    self.wants(*weight),
                    bias.is_some_and(|b| self.wants(b)),
                );
                if let Some(dx) = r.input {
                    self.accumulate(grads, *input, Tensor::new(x.shape().to_vec(), dx));
                }
                if let Some(dw) = r.weight {
                    self.accumulate(grads, *weight, Tensor::new(w.shape().to_vec(), dw));
                }
                if let (Some(b), Some(db)) = (bias, r.bias) {
                    self.accumulate(grads, *b, Tensor::new(vec![o], db));
                }
            }
            Op::Linear {
                input,
                weight,
                bias,
            } => {
                let x = self.value(*input);
                let w = self.value(*weight);
                let (n, k) = (x.shape()[0], x.shape()[1]);
                let o = w.shape()[0];
                if self.wants(*input) {
                    let mut dx = vec![0.0; n * k];
                    kernels::gemm(n, o, k, g.data(), false, w.data(), false, 0.0, &mut dx);
                    self.accumulate(grads, *input, Tensor::new(vec![n, k], dx));
                }
                if self.wants(*weight) {
                    let mut dw = vec![0.0; o * k];
                    kernels::gemm(o, n, k, g.data(), true, x.data(), false, 0.0, &mut dw);
                    self.accumulate(grads, *weight, Tensor::new(vec![o, k], dw));
                }
                if let Some(b) = bias {
                    if self.wants(*b) {
                        let mut db = vec![0.0; o];
                        for row in g.data().chunks(o) {
                            db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                        }
                        self.accumulate(grads, *b, Tensor::new(vec![o], db));
                    }
                }
            }
            Op::Relu(a) => {
                let t = zip(g, self.value(*a), |g, x| if x > 0.0 { g } else { 0.0 });
                self.accumulate(grads, *a, t);
            }
            Op::LeakyRelu(a, slope) => {
                let t = zip(
                    g,
                    self.value(*a),
                    |g, x| if x > 0.0 { g } else { slope * g },
                );
                self.accumulate(grads, *a, t);
            }
            Op::Sigmoid(a) => {
                let t = zip(g, out, |g, y| g * y * (1.0 - y));
                self.accumulate(grads, *a, t);
            }
            Op::Tanh(a) => {
                let t = zip(g, out, |g, y| g * (1.0 - y * y));
                self.accumulate(grads, *a, t);
            }
            Op::MaxPool2(a) => {
                let x = self.value(*a);
                let (n, c, h, w) = x.dims4();
                let dx = kernels::max_pool2_backward(x.data(), g.data(), n * c, h, w);
                self.accumulate(grads, *a, Tensor::new(x.shape().to_vec(), dx));
            }
            Op::Upsample2(a) => {
                let x = self.value(*a);
                let (n, c, h, w) = x.dims4();
                let dx = kernels::upsample_nearest2_backward(g.data(), n * c, h, w);
                self.accumulate(grads, *a, Tensor::new(x.shape().to_vec(), dx));
            }
            Op::ConcatChannels(a, b) => {
                let (n, ca, h, w) = self.value(*a).dims4();
                let cb = self.value(*b).dims4().1;
                let plane = h * w;
                let mut da = Vec::with_capacity(n * ca * plane);
                let mut db = Vec::with_capacity(n * cb * plane);
                for s in 0..n {
                    let base = s * (ca + cb) * plane;
                    da.extend_from_slice(&g.data()[base..base + ca * plane]);
                    db.extend_from_slice(&g.data()[base + ca * plane..base + (ca + cb) * plane]);
                }
                if self.wants(*a) {
                    self.accumulate(grads, *a, Tensor::new(vec![n, ca, h, w], da));
                }
                if self.wants(*b) {
                    self.accumulate(grads, *b, Tensor::new(vec![n, cb, h, w], db));
                }
            }
            Op::ConcatBatch(a, b) => {
                let la = self.value(*a).len();
                if self.wants(*a) {
                    let t = Tensor::new(self.shape(*a).to_vec(), g.data()[..la].to_vec());
                    self.accumulate(grads, *a, t);
                }
                if self.wants(*b) {
                    let t = Tensor::new(self.shape(*b).to_vec(), g.data()[la..].to_vec());
                    self.accumulate(grads, *b, t);
                }
            }
            Op::NarrowBatch(a, start) => {
                let src = self.value(*a);
                let stride = src.len() / src.shape()[0];
                let mut d = Tensor::zeros(src.shape().to_vec());
                d.data_mut()[start * stride..start * stride + g.len()].copy_from_slice(g.data());
                self.accumulate(grads, *a, d);
            }
            Op::GlobalAvgPool(a) => {
                let x = self.value(*a);
                let (_, _, h, w) = x.dims4();
                let inv = 1.0 / (h * w) as f64;
                let mut d = Vec::with_capacity(x.len());
                for &gv in g.data() {
                    d.extend(std::iter::repeat_n(gv * inv, h * w));
                }
                self.accumulate(grads, *a, Tensor::new(x.shape().to_vec(), d));
            }
            Op::SumAll(a) => {
                let gv = g.item();
                self.accumulate(grads, *a, Tensor::full(self.shape(*a).to_vec(), gv));
            }
            Op::MeanAll(a) => {
                let gv = g.item() / self.value(*a).len() as f64;
                self.accumulate(grads, *a, Tensor::full(self.shape(*a).to_vec(), gv));
            }
            Op::WeightedSum(a, weights) => {
                let gv = g.item();
                self.accumulate(grads, *a, weights.map(|w| w * gv));
            }
            Op::BceProb { prob, target, eps } => {
                let p = self.value(*prob);
                let scale = g.item() / p.len() as f64;
                let d = zip(p, target, |p, t| {
                    if p < *eps || p > 1.0 - eps {
                        0.0
                    } else {
                        scale * (-t / p + (1.0 - t) / (1.0 - p))
                    }
                });
                self.accumulate(grads, *prob, d);
            }
            Op::BceLogits { logits, labels } => {
                let z = self.value(*logits);
                let scale = g.item() / labels.len() as f64;
                let d = Tensor::new(
                    z.shape().to_vec(),
                    z.data()
                        .iter()
                        .zip(labels)
                        .map(|(&z, &y)| scale * (sigmoid(z) - y))
                        .collect(),
                );
                self.accumulate(grads, *logits, d);
            }
            Op::GradReverse(a, lambda) => {
                self.accumulate(grads, *a, g.map(|v| -lambda * v));
            }
        }
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::new(
        a.shape().to_vec(),
        a.data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect(),
    )
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn bce_term(p: f64, g: f64) -> f64 {
    -(g * p.ln() + (1.0 - g) * (1.0 - p).ln())
}

fn bce_logit_term(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Gradients produced by one reverse sweep, indexed by node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient of every bound parameter; parameters the loss does not
    /// depend on receive zeros.
    pub fn for_params(&self, graph: &Graph, bound: &Bound) -> BTreeMap<String, Tensor> {
        bound
            .iter()
            .map(|(name, id)| {
                let g = self
                    .get(id)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(graph.shape(id).to_vec()));
                (name.to_string(), g)
            })
            .collect()
    }
}
