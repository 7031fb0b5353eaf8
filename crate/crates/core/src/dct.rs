//! Orthonormal separable DCT (type II forward, type III inverse).
//!
//! Chunks are transformed by dense matrix products along each axis in turn.
//! Edges are small, so the O(N^2) product is cheap, and the basis for each
//! edge length is built once and shared through a [`BasisCache`].

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, RwLock};

use crate::error::TensorError;
use crate::tensor::Element;

/// Orthonormal DCT-II matrix for one edge length, together with its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct DctBasis {
    size: usize,
    forward: Vec<f64>,
    inverse: Vec<f64>,
}

impl DctBasis {
    /// `forward[k][n] = sqrt(2/N) * c_k * cos(pi * (2n + 1) * k / 2N)`, with
    /// `c_0 = 1/sqrt(2)` and `c_k = 1` otherwise. The inverse is the transpose.
    pub fn build(size: usize) -> Self {
        assert!(size >= 1, "DCT size must be at least 1");
        let n = size as f64;
        let mut forward = vec![0.0; size * size];
        for k in 0..size {
            let ck = if k == 0 { 1.0 / 2f64.sqrt() } else { 1.0 };
            for i in 0..size {
                forward[k * size + i] =
                    (2.0 / n).sqrt() * ck * (PI * (2 * i + 1) as f64 * k as f64 / (2.0 * n)).cos();
            }
        }
        let mut inverse = vec![0.0; size * size];
        for r in 0..size {
            for c in 0..size {
                inverse[c * size + r] = forward[r * size + c];
            }
        }
        Self {
            size,
            forward,
            inverse,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Row-major `N x N` forward matrix.
    pub fn forward(&self) -> &[f64] {
        &self.forward
    }

    pub fn inverse(&self) -> &[f64] {
        &self.inverse
    }
}

pub fn build_basis(size: usize) -> DctBasis {
    DctBasis::build(size)
}

/// Lazily populated map from edge length to basis. Shared across workers.
#[derive(Debug, Default)]
pub struct BasisCache {
    bases: RwLock<HashMap<usize, Arc<DctBasis>>>,
}

impl BasisCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, size: usize) -> Arc<DctBasis> {
        if let Some(b) = self.bases.read().expect("basis cache poisoned").get(&size) {
            return Arc::clone(b);
        }
        let mut bases = self.bases.write().expect("basis cache poisoned");
        Arc::clone(
            bases
                .entry(size)
                .or_insert_with(|| Arc::new(DctBasis::build(size))),
        )
    }

    pub fn bases_for(&self, shape: &[usize]) -> Vec<Arc<DctBasis>> {
        shape.iter().map(|&n| self.get(n)).collect()
    }

    pub fn len(&self) -> usize {
        self.bases.read().expect("basis cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Direction {
    Forward,
    Inverse,
}

/// Applies the 1-D transform along `axis` of a row-major block in place.
fn transform_axis(
    buf: &mut [f64],
    shape: &[usize],
    axis: usize,
    basis: &DctBasis,
    dir: Direction,
    scratch: &mut Vec<f64>,
) {
    let n = shape[axis];
    debug_assert_eq!(basis.size(), n);
    if n == 1 {
        return;
    }
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let m = match dir {
        Direction::Forward => basis.forward(),
        Direction::Inverse => basis.inverse(),
    };
    scratch.clear();
    scratch.resize(2 * n, 0.0);
    let (line, out) = scratch.split_at_mut(n);
    for o in 0..outer {
        let base = o * n * inner;
        for i in 0..inner {
            for j in 0..n {
                line[j] = buf[base + j * inner + i];
            }
            for (k, slot) in out.iter_mut().enumerate() {
                let row = &m[k * n..(k + 1) * n];
                *slot = row.iter().zip(line.iter()).map(|(a, b)| a * b).sum();
            }
            for j in 0..n {
                buf[base + j * inner + i] = out[j];
            }
        }
    }
}

/// Transforms a 64-bit block in place, axes visited in `order`.
pub(crate) fn transform_in_place(
    buf: &mut [f64],
    shape: &[usize],
    bases: &[Arc<DctBasis>],
    dir: Direction,
    order: &[usize],
) {
    let mut scratch = Vec::new();
    for &axis in order {
        transform_axis(buf, shape, axis, &bases[axis], dir, &mut scratch);
    }
}

fn run<T: Element>(
    chunk: &[T],
    shape: &[usize],
    cache: &BasisCache,
    dir: Direction,
) -> Result<Vec<T>, TensorError> {
    let expected: usize = shape.iter().product();
    if shape.is_empty() || chunk.len() != expected {
        return Err(TensorError::DataLength {
            len: chunk.len(),
            shape: shape.to_vec(),
        });
    }
    let bases = cache.bases_for(shape);
    let mut buf: Vec<f64> = chunk.iter().map(|v| v.widen()).collect();
    let order: Vec<usize> = (0..shape.len()).collect();
    transform_in_place(&mut buf, shape, &bases, dir, &order);
    Ok(buf.into_iter().map(T::cast).collect())
}

/// Forward DCT-II of one row-major chunk of the given shape.
pub fn dct_forward_chunk<T: Element>(
    chunk: &[T],
    shape: &[usize],
    cache: &BasisCache,
) -> Result<Vec<T>, TensorError> {
    run(chunk, shape, cache, Direction::Forward)
}

/// Inverse (DCT-III) of one row-major coefficient block.
pub fn dct_inverse_chunk<T: Element>(
    coeffs: &[T],
    shape: &[usize],
    cache: &BasisCache,
) -> Result<Vec<T>, TensorError> {
    run(coeffs, shape, cache, Direction::Inverse)
}
