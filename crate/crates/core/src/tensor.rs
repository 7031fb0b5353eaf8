//! Dense row-major tensors and the chunked view the DCT operates on.
//!
//! A tensor of shape `(n_0, .., n_{d-1})` is cut into contiguous blocks of
//! shape `(s_0, .., s_{d-1})`. Blocks are enumerated in row-major order over
//! the chunk grid `(n_0 / s_0, ..)`, and the elements inside each block are
//! stored row-major as well.

use std::fmt::{Debug, Display};

use num_traits::Float;

use crate::error::TensorError;

/// Floating point element type of a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn name(self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::F64 => "f64",
        }
    }
}

/// Scalar types a [`Tensor`] can hold.
pub trait Element: Float + Default + Debug + Display + Send + Sync + 'static {
    const DTYPE: DType;

    fn cast(v: f64) -> Self;
    fn widen(self) -> f64;
}

impl Element for f32 {
    const DTYPE: DType = DType::F32;

    #[inline]
    fn cast(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn widen(self) -> f64 {
        self as f64
    }
}

impl Element for f64 {
    const DTYPE: DType = DType::F64;

    #[inline]
    fn cast(v: f64) -> Self {
        v
    }

    #[inline]
    fn widen(self) -> f64 {
        self
    }
}

fn check_shape(shape: &[usize]) -> Result<(), TensorError> {
    if shape.is_empty() || shape.iter().any(|&n| n == 0) {
        return Err(TensorError::InvalidShape(shape.to_vec()));
    }
    Ok(())
}

/// Dense n-dimensional array with row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self, TensorError> {
        let shape = shape.into();
        check_shape(&shape)?;
        if data.len() != shape.iter().product::<usize>() {
            return Err(TensorError::DataLength {
                len: data.len(),
                shape,
            });
        }
        Ok(Self { shape, data })
    }

    pub fn filled(shape: impl Into<Vec<usize>>, value: T) -> Result<Self, TensorError> {
        let shape = shape.into();
        check_shape(&shape)?;
        let len = shape.iter().product();
        Ok(Self {
            shape,
            data: vec![value; len],
        })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Result<Self, TensorError> {
        Self::filled(shape, T::zero())
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self {
            shape: other.shape.clone(),
            data: vec![T::zero(); other.data.len()],
        }
    }

    pub fn from_fn(
        shape: impl Into<Vec<usize>>,
        mut f: impl FnMut(usize) -> T,
    ) -> Result<Self, TensorError> {
        let shape = shape.into();
        check_shape(&shape)?;
        let len: usize = shape.iter().product();
        Ok(Self {
            shape,
            data: (0..len).map(&mut f).collect(),
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dtype(&self) -> DType {
        T::DTYPE
    }

    pub fn ensure_same_shape(&self, other: &Self) -> Result<(), TensorError> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                expected: self.shape.clone(),
                found: other.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise sign with `sign(0) = 0`.
    pub fn sign(&self) -> Self {
        self.map(|v| {
            if v > T::zero() {
                T::one()
            } else if v < T::zero() {
                -T::one()
            } else {
                T::zero()
            }
        })
    }

    pub fn scale(&mut self, factor: T) {
        for v in &mut self.data {
            *v = *v * factor;
        }
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: T, other: &Self) -> Result<(), TensorError> {
        self.ensure_same_shape(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + alpha * b;
        }
        Ok(())
    }

    pub fn sub_assign(&mut self, other: &Self) -> Result<(), TensorError> {
        self.axpy(-T::one(), other)
    }

    /// Sum of squares, accumulated in 64-bit.
    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|v| v.widen() * v.widen()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.sq_norm().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.widen().abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64, TensorError> {
        self.ensure_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a.widen() - b.widen()).abs())))
    }

    pub fn to_f64(&self) -> Tensor<f64> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v.widen()).collect(),
        }
    }

    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::cast(v.widen())).collect(),
        }
    }
}

/// How a tensor is cut into chunks.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChunkGeometry {
    tensor_shape: Vec<usize>,
    chunk_shape: Vec<usize>,
    chunk_grid: Vec<usize>,
}

impl ChunkGeometry {
    pub fn new(
        tensor_shape: impl Into<Vec<usize>>,
        chunk_shape: impl Into<Vec<usize>>,
    ) -> Result<Self, TensorError> {
        let tensor_shape = tensor_shape.into();
        let chunk_shape = chunk_shape.into();
        check_shape(&tensor_shape)?;
        check_shape(&chunk_shape)?;
        if chunk_shape.len() != tensor_shape.len() {
            return Err(TensorError::ShapeMismatch {
                expected: tensor_shape,
                found: chunk_shape,
            });
        }
        let mut chunk_grid = Vec::with_capacity(tensor_shape.len());
        for (dim, (&n, &s)) in tensor_shape.iter().zip(&chunk_shape).enumerate() {
            if n % s != 0 {
                return Err(TensorError::NonDivisible {
                    dim,
                    size: n,
                    chunk: s,
                });
            }
            chunk_grid.push(n / s);
        }
        Ok(Self {
            tensor_shape,
            chunk_shape,
            chunk_grid,
        })
    }

    pub fn tensor_shape(&self) -> &[usize] {
        &self.tensor_shape
    }

    pub fn chunk_shape(&self) -> &[usize] {
        &self.chunk_shape
    }

    pub fn chunk_grid(&self) -> &[usize] {
        &self.chunk_grid
    }

    /// Number of elements in one chunk.
    pub fn chunk_len(&self) -> usize {
        self.chunk_shape.iter().product()
    }

    pub fn num_chunks(&self) -> usize {
        self.chunk_grid.iter().product()
    }

    pub fn num_elements(&self) -> usize {
        self.tensor_shape.iter().product()
    }

    /// Position of every tensor element (row-major) in the chunked layout.
    fn for_each_mapping(&self, mut f: impl FnMut(usize, usize)) {
        let d = self.tensor_shape.len();
        let chunk_len = self.chunk_len();
        let mut idx = vec![0usize; d];
        for flat in 0..self.num_elements() {
            let mut chunk_id = 0;
            let mut inner = 0;
            for axis in 0..d {
                let s = self.chunk_shape[axis];
                chunk_id = chunk_id * self.chunk_grid[axis] + idx[axis] / s;
                inner = inner * s + idx[axis] % s;
            }
            f(flat, chunk_id * chunk_len + inner);
            for axis in (0..d).rev() {
                idx[axis] += 1;
                if idx[axis] < self.tensor_shape[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }
    }
}

/// Largest divisor of `n` that does not exceed `cap`.
fn largest_divisor_at_most(n: usize, cap: usize) -> usize {
    (1..=cap.min(n)).rev().find(|s| n % s == 0).unwrap_or(1)
}

/// Builds a geometry whose edge along each axis is the largest divisor of
/// that dimension not exceeding `requested`.
pub fn clamp_chunk_shape(tensor_shape: &[usize], requested: usize) -> Result<ChunkGeometry, TensorError> {
    let requested = requested.max(1);
    let chunk: Vec<usize> = tensor_shape
        .iter()
        .map(|&n| largest_divisor_at_most(n, requested))
        .collect();
    ChunkGeometry::new(tensor_shape.to_vec(), chunk)
}

/// A tensor rearranged into chunk-major order: chunk `i` occupies
/// `data[i * chunk_len .. (i + 1) * chunk_len]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkedView<T> {
    chunk_shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Element> ChunkedView<T> {
    pub fn from_chunks(chunk_shape: impl Into<Vec<usize>>, data: Vec<T>) -> Self {
        Self {
            chunk_shape: chunk_shape.into(),
            data,
        }
    }

    pub fn chunk_shape(&self) -> &[usize] {
        &self.chunk_shape
    }

    pub fn chunk_len(&self) -> usize {
        self.chunk_shape.iter().product()
    }

    pub fn num_chunks(&self) -> usize {
        self.data.len() / self.chunk_len()
    }

    pub fn chunk(&self, i: usize) -> &[T] {
        let n = self.chunk_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn chunk_mut(&mut self, i: usize) -> &mut [T] {
        let n = self.chunk_len();
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn chunks(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks(self.chunk_len())
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }
}

pub fn chunk<T: Element>(t: &Tensor<T>, g: &ChunkGeometry) -> Result<ChunkedView<T>, TensorError> {
    if t.shape() != g.tensor_shape() {
        return Err(TensorError::ShapeMismatch {
            expected: g.tensor_shape().to_vec(),
            found: t.shape().to_vec(),
        });
    }
    let mut out = vec![T::zero(); t.len()];
    let src = t.data();
    g.for_each_mapping(|flat, chunked| out[chunked] = src[flat]);
    Ok(ChunkedView::from_chunks(g.chunk_shape().to_vec(), out))
}

pub fn unchunk<T: Element>(view: &ChunkedView<T>, g: &ChunkGeometry) -> Result<Tensor<T>, TensorError> {
    if view.chunk_shape() != g.chunk_shape() || view.data.len() != g.num_elements() {
        return Err(TensorError::ShapeMismatch {
            expected: g.chunk_shape().to_vec(),
            found: view.chunk_shape().to_vec(),
        });
    }
    let mut out = vec![T::zero(); view.data.len()];
    g.for_each_mapping(|flat, chunked| out[flat] = view.data[chunked]);
    Tensor::new(g.tensor_shape().to_vec(), out)
}
