use std::fmt;

use ndarray::{Array2, Array4, ArrayView2};

/// Dense row-major `f64` tensor. Image batches are laid out NCHW.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("len", &self.data.len())
            .finish()
    }
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Self {
        let shape = shape.into();
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data length does not match shape {shape:?}"
        );
        Self { shape, data }
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: f64) -> Self {
        let shape = shape.into();
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![value; len],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(
            self.data.len(),
            1,
            "item() on tensor of shape {:?}",
            self.shape
        );
        self.data[0]
    }

    /// `(n, c, h, w)` of a 4-D tensor.
    pub fn dims4(&self) -> (usize, usize, usize, usize) {
        match self.shape[..] {
            [n, c, h, w] => (n, c, h, w),
            _ => panic!("expected a 4-D tensor, got shape {:?}", self.shape),
        }
    }

    pub fn reshape(mut self, shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        assert_eq!(shape.iter().product::<usize>(), self.data.len());
        self.shape = shape;
        self
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Sample `index` of a batched tensor, keeping the leading axis (size 1).
    pub fn batch_item(&self, index: usize) -> Tensor {
        let n = self.shape[0];
        assert!(index < n);
        let stride = self.data.len() / n;
        let mut shape = self.shape.clone();
        shape[0] = 1;
        Tensor::new(
            shape,
            self.data[index * stride..(index + 1) * stride].to_vec(),
        )
    }

    /// Concatenates along the leading (batch) axis.
    pub fn concat_batch(parts: &[&Tensor]) -> Tensor {
        assert!(!parts.is_empty());
        let tail = &parts[0].shape[1..];
        let mut n = 0;
        let mut data = Vec::new();
        for p in parts {
            assert_eq!(&p.shape[1..], tail, "concat_batch: trailing dims differ");
            n += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        let mut shape = vec![n];
        shape.extend_from_slice(tail);
        Tensor::new(shape, data)
    }

    /// Builds an `(n, 1, h, w)` batch from single-channel planes.
    pub fn from_planes<'a>(planes: impl IntoIterator<Item = ArrayView2<'a, f64>>) -> Tensor {
        let mut data = Vec::new();
        let mut dims = None;
        let mut n = 0;
        for plane in planes {
            let d = plane.dim();
            if let Some(prev) = dims {
                assert_eq!(prev, d, "from_planes: plane shapes differ");
            }
            dims = Some(d);
            data.extend(plane.iter().copied());
            n += 1;
        }
        let (h, w) = dims.expect("from_planes: no planes");
        Tensor::new(vec![n, 1, h, w], data)
    }

    /// Channel `c` of sample `n` as a 2-D array.
    pub fn plane(&self, n: usize, c: usize) -> Array2<f64> {
        let (_, cs, h, w) = self.dims4();
        let off = (n * cs + c) * h * w;
        Array2::from_shape_vec((h, w), self.data[off..off + h * w].to_vec()).expect("plane shape")
    }

    pub fn to_array4(&self) -> Array4<f64> {
        let (n, c, h, w) = self.dims4();
        Array4::from_shape_vec((n, c, h, w), self.data.clone()).expect("array4 shape")
    }

    pub fn from_array4(a: &Array4<f64>) -> Tensor {
        let (n, c, h, w) = a.dim();
        Tensor::new(vec![n, c, h, w], a.iter().copied().collect())
    }
}
