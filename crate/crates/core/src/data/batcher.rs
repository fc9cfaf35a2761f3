use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FingerprintSample;
use crate::nn::Tensor;
use crate::{Error, Result};

/// One optimization step's worth of data.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainBatch {
    pub source_indices: Vec<usize>,
    pub target_indices: Vec<usize>,
    /// `n × 1 × side × side`.
    pub source_images: Tensor,
    /// `n × 1 × side × side`, values in `{0, 1}`.
    pub source_masks: Tensor,
    /// `None` when the batcher runs without a target stream.
    pub target_images: Option<Tensor>,
}

impl DomainBatch {
    pub fn per_domain(&self) -> usize {
        self.source_indices.len()
    }
}

/// Serializable position of one shuffle stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamState {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u128,
    pub order: Vec<usize>,
    pub cursor: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatcherState {
    pub source: StreamState,
    pub target: Option<StreamState>,
}

/// Epoch-wise reshuffled index stream.
#[derive(Clone, Debug)]
struct Shuffle {
    rng: ChaCha8Rng,
    seed: u64,
    stream: u64,
    order: Vec<usize>,
    cursor: usize,
}

impl Shuffle {
    fn new(len: usize, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        Self {
            rng,
            seed,
            stream,
            order,
            cursor: 0,
        }
    }

    fn next_index(&mut self) -> usize {
        if self.cursor == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let i = self.order[self.cursor];
        self.cursor += 1;
        i
    }

    fn state(&self) -> StreamState {
        StreamState {
            seed: self.seed,
            stream: self.stream,
            word_pos: self.rng.get_word_pos(),
            order: self.order.clone(),
            cursor: self.cursor,
        }
    }

    fn restore(s: &StreamState) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        rng.set_stream(s.stream);
        rng.set_word_pos(s.word_pos);
        Self {
            rng,
            seed: s.seed,
            stream: s.stream,
            order: s.order.clone(),
            cursor: s.cursor,
        }
    }
}

const SOURCE_STREAM: u64 = 11;
const TARGET_STREAM: u64 = 12;

/// Infinite iterator of paired source/target batches.
///
/// The source and target streams use independent RNG streams derived from
/// one seed, so a source-only batcher with the same seed draws exactly the
/// same source batches as a paired one.
#[derive(Clone, Debug)]
pub struct DomainBatcher<'a> {
    source: &'a [FingerprintSample],
    target: Option<&'a [FingerprintSample]>,
    per_domain: usize,
    source_order: Shuffle,
    target_order: Option<Shuffle>,
}

fn check_shapes(samples: &[FingerprintSample], dims: (usize, usize), what: &str) -> Result<()> {
    for s in samples {
        if s.image.dim() != dims {
            return Err(Error::Shape(format!(
                "{what} sample {} is {:?}, expected {:?}; preprocess all samples to one side",
                s.id,
                s.image.dim(),
                dims
            )));
        }
    }
    Ok(())
}

impl<'a> DomainBatcher<'a> {
    pub fn new(
        source: &'a [FingerprintSample],
        target: &'a [FingerprintSample],
        per_domain: usize,
        seed: u64,
    ) -> Result<Self> {
        if target.is_empty() {
            return Err(Error::Invalid("target sample list is empty".into()));
        }
        let mut b = Self::source_only(source, per_domain, seed)?;
        check_shapes(target, source[0].image.dim(), "target")?;
        b.target = Some(target);
        b.target_order = Some(Shuffle::new(target.len(), seed, TARGET_STREAM));
        Ok(b)
    }

    pub fn source_only(
        source: &'a [FingerprintSample],
        per_domain: usize,
        seed: u64,
    ) -> Result<Self> {
        if source.is_empty() {
            return Err(Error::Invalid("source sample list is empty".into()));
        }
        if per_domain == 0 {
            return Err(Error::Invalid(
                "per-domain batch size must be positive".into(),
            ));
        }
        check_shapes(source, source[0].image.dim(), "source")?;
        if let Some(s) = source.iter().find(|s| s.mask.is_none()) {
            return Err(Error::Precondition(format!(
                "source sample {} of {} has no ground-truth mask",
                s.id, s.database
            )));
        }
        Ok(Self {
            source,
            target: None,
            per_domain,
            source_order: Shuffle::new(source.len(), seed, SOURCE_STREAM),
            target_order: None,
        })
    }

    pub fn state(&self) -> BatcherState {
        BatcherState {
            source: self.source_order.state(),
            target: self.target_order.as_ref().map(Shuffle::state),
        }
    }

    /// Resumes from a saved position. The sample lists must be the ones the
    /// state was taken from.
    pub fn restore(&mut self, state: &BatcherState) -> Result<()> {
        if state.source.order.len() != self.source.len()
            || state.target.as_ref().map(|t| t.order.len()) != self.target.map(<[_]>::len)
        {
            return Err(Error::Checkpoint(
                "batcher state does not match the sample lists".into(),
            ));
        }
        self.source_order = Shuffle::restore(&state.source);
        self.target_order = state.target.as_ref().map(Shuffle::restore);
        Ok(())
    }
}

impl Iterator for DomainBatcher<'_> {
    type Item = DomainBatch;

    fn next(&mut self) -> Option<DomainBatch> {
        let source_indices: Vec<usize> = (0..self.per_domain)
            .map(|_| self.source_order.next_index())
            .collect();
        let source_images =
            Tensor::from_planes(source_indices.iter().map(|&i| self.source[i].image.view()));
        let masks: Vec<_> = source_indices
            .iter()
            .map(|&i| {
                self.source[i]
                    .mask
                    .as_ref()
                    .expect("checked at construction")
                    .mapv(f64::from)
            })
            .collect();
        let source_masks = Tensor::from_planes(masks.iter().map(|m| m.view()));
        let (target_indices, target_images) = match (self.target, self.target_order.as_mut()) {
            (Some(target), Some(order)) => {
                let idx: Vec<usize> = (0..self.per_domain).map(|_| order.next_index()).collect();
                let imgs = Tensor::from_planes(idx.iter().map(|&i| target[i].image.view()));
                (idx, Some(imgs))
            }
            _ => (Vec::new(), None),
        };
        Some(DomainBatch {
            source_indices,
            target_indices,
            source_images,
            source_masks,
            target_images,
        })
    }
}
