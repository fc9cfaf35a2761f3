//! Minimal CPU tensor engine: dense `f64` tensors, a reverse-mode tape,
//! named parameter storage, and the Adam optimizer.

mod graph;
pub(crate) mod kernels;
mod optim;
mod tensor;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use graph::{sigmoid, Bound, Gradients, Graph, NodeId};
pub use optim::{Adam, AdamConfig};
pub use tensor::Tensor;

/// Named parameter tensors. Iteration order is the lexicographic order of
/// the canonical names, which fixes checkpoint layout and initialization
/// order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar parameter count.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Subset whose names start with `prefix`.
    pub fn with_prefix(&self, prefix: &str) -> ParamStore {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn merge(&mut self, other: ParamStore) {
        self.tensors.extend(other.tensors);
    }

    /// FNV-1a over names, shapes and the bit patterns of every value.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= u64::from(*b);
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for (name, t) in &self.tensors {
            eat(name.as_bytes());
            for d in t.shape() {
                eat(&(*d as u64).to_le_bytes());
            }
            for v in t.data() {
                eat(&v.to_bits().to_le_bytes());
            }
        }
        h
    }
}

/// How a freshly created parameter is filled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    /// Uniform on `±sqrt(6 / fan_in)` (He/Kaiming uniform).
    HeUniform {
        fan_in: usize,
    },
    /// Uniform on `±bound`.
    Uniform {
        bound: f64,
    },
}

/// Fills `shapes` in order from one ChaCha stream derived from `seed` and
/// `stream`.
pub fn init_params(specs: &[(String, Vec<usize>, Init)], seed: u64, stream: u64) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut sorted: Vec<_> = specs.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut store = ParamStore::new();
    for (name, shape, init) in sorted {
        let len: usize = shape.iter().product();
        let data = match *init {
            Init::Zeros => vec![0.0; len],
            Init::HeUniform { fan_in } => {
                let bound = (6.0 / fan_in as f64).sqrt();
                (0..len).map(|_| rng.random_range(-bound..bound)).collect()
            }
            Init::Uniform { bound } => (0..len).map(|_| rng.random_range(-bound..bound)).collect(),
        };
        store.insert(name.clone(), Tensor::new(shape.clone(), data));
    }
    store
}

/// Convolution parameter specs `{prefix}.weight` and `{prefix}.bias`.
pub(crate) fn conv_spec(
    prefix: &str,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    init: Option<Init>,
) -> [(String, Vec<usize>, Init); 2] {
    let fan_in = in_channels * kernel * kernel;
    [
        (
            format!("{prefix}.weight"),
            vec![out_channels, in_channels, kernel, kernel],
            init.unwrap_or(Init::HeUniform { fan_in }),
        ),
        (format!("{prefix}.bias"), vec![out_channels], Init::Zeros),
    ]
}

/// `conv → bias` using parameters `{prefix}.weight` / `{prefix}.bias`.
pub(crate) fn conv(
    g: &mut Graph,
    p: &Bound,
    prefix: &str,
    x: NodeId,
    stride: usize,
    pad: usize,
) -> NodeId {
    let w = p.get(&format!("{prefix}.weight"));
    let b = p.try_get(&format!("{prefix}.bias"));
    g.conv2d(x, w, b, stride, pad)
}
