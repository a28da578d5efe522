//! Dense row-major tensors in double precision.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Immutable N-dimensional array. Cloning shares the underlying buffer.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<[f64]>,
}

impl Tensor {
    /// Builds a tensor, rejecting shape/length mismatches and non-finite values.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let t = Self::from_parts(shape, data)?;
        t.check_finite("tensor")?;
        Ok(t)
    }

    /// Like [`Tensor::new`] but allows non-finite values. Internal sweeps use
    /// this and check finiteness per layer instead.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::validation(format!(
                "shape {shape:?} has a zero extent"
            )));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::validation(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape,
            data: data.into(),
        })
    }

    /// Internal constructor for buffers whose length is known to match.
    pub(crate) fn from_raw(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            shape,
            data: data.into(),
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self::from_raw(shape.to_vec(), vec![value; n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data.to_vec()
    }

    /// Returns `(K, C, H, W)` or a validation error if the rank is not 4.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match *self.shape.as_slice() {
            [k, c, h, w] => Ok((k, c, h, w)),
            _ => Err(Error::validation(format!(
                "expected a rank-4 tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_finite(&self, what: &str) -> Result<()> {
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "{what} contains a non-finite value at flat index {pos}"
            )));
        }
        Ok(())
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.len() {
            return Err(Error::validation(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Tensor {
            shape,
            data: Arc::clone(&self.data),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(
            self.shape.clone(),
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::validation(format!(
                "shape mismatch {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self::from_raw(self.shape.clone(), data))
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Euclidean inner product over all elements.
    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::validation(format!(
                "shape mismatch {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Slice `k` along the leading axis, keeping it as an extent-1 axis.
    pub fn batch_item(&self, k: usize) -> Result<Self> {
        let lead = *self
            .shape
            .first()
            .ok_or_else(|| Error::validation("rank-0 tensor has no batch axis"))?;
        if k >= lead {
            return Err(Error::validation(format!(
                "batch index {k} out of range for extent {lead}"
            )));
        }
        let stride = self.len() / lead;
        let mut shape = self.shape.clone();
        shape[0] = 1;
        Ok(Self::from_raw(
            shape,
            self.data[k * stride..(k + 1) * stride].to_vec(),
        ))
    }

    /// Concatenates tensors along the leading axis. Trailing extents must agree.
    pub fn stack_batch(items: &[Tensor]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::validation("cannot stack an empty list"))?;
        let tail = &first.shape[1..];
        let mut lead = 0;
        let mut data = Vec::with_capacity(items.iter().map(Tensor::len).sum());
        for t in items {
            if &t.shape[1..] != tail {
                return Err(Error::validation(format!(
                    "cannot stack {:?} with {:?}",
                    t.shape, first.shape
                )));
            }
            lead += t.shape[0];
            data.extend_from_slice(&t.data);
        }
        let mut shape = first.shape.clone();
        shape[0] = lead;
        Ok(Self::from_raw(shape, data))
    }

    /// Adds a leading extent-1 axis.
    pub fn unsqueeze0(&self) -> Self {
        let mut shape = Vec::with_capacity(self.rank() + 1);
        shape.push(1);
        shape.extend_from_slice(&self.shape);
        Tensor {
            shape,
            data: Arc::clone(&self.data),
        }
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "Tensor{:?} ", self.shape)?;
        let head = &self.data[..self.len().min(SHOWN)];
        if self.len() > SHOWN {
            write!(f, "{head:?}...")
        } else {
            write!(f, "{head:?}")
        }
    }
}
