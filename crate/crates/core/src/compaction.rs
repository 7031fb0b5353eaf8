//! Top-k DCT extraction of fast components and their reconstruction.
//!
//! Every chunk of a momentum tensor is taken to the DCT domain and the `k`
//! coefficients with the largest magnitude are kept as `(freq, ampl)` pairs.
//! Reconstruction scatters those pairs back into dense coefficient blocks,
//! averaging bins chosen by several workers, and inverts the transform.

use std::cmp::Ordering;

use crate::dct::{transform_in_place, BasisCache, Direction};
use crate::error::TensorError;
use crate::tensor::{chunk, unchunk, ChunkGeometry, ChunkedView, Element, Tensor};

/// How amplitudes of a bin chosen by several workers are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MergeRule {
    /// Divide the summed amplitude by the number of workers that chose the bin.
    #[default]
    ContributorAverage,
    /// Divide the summed amplitude by the world size.
    WorldAverage,
}

impl MergeRule {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "contributor" | "contributor_average" => Some(Self::ContributorAverage),
            "world" | "world_average" => Some(Self::WorldAverage),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::ContributorAverage => "contributor",
            Self::WorldAverage => "world",
        }
    }
}

/// Sparse DCT representation of one tensor: `k` bins per chunk.
///
/// `freq` and `ampl` are laid out as `(chunk_grid.., k)` in row-major order;
/// frequency indices are flattened row-major positions inside the chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedComponents<T> {
    pub tensor_id: u32,
    pub geometry: ChunkGeometry,
    pub k: usize,
    pub freq: Vec<u32>,
    pub ampl: Vec<T>,
}

impl<T: Element> CompressedComponents<T> {
    /// Shape of the `freq` / `ampl` tensors.
    pub fn shape(&self) -> Vec<usize> {
        let mut s = self.geometry.chunk_grid().to_vec();
        s.push(self.k);
        s
    }

    pub fn chunk_freq(&self, chunk: usize) -> &[u32] {
        &self.freq[chunk * self.k..(chunk + 1) * self.k]
    }

    pub fn chunk_ampl(&self, chunk: usize) -> &[T] {
        &self.ampl[chunk * self.k..(chunk + 1) * self.k]
    }

    /// Checks the layout invariants: lengths, index range, distinct bins per chunk.
    pub fn validate(&self) -> Result<(), TensorError> {
        let chunk_len = self.geometry.chunk_len();
        if self.k == 0 || self.k > chunk_len {
            return Err(TensorError::InvalidK {
                k: self.k,
                max: chunk_len,
            });
        }
        let expected = self.geometry.num_chunks() * self.k;
        if self.freq.len() != expected || self.ampl.len() != expected {
            return Err(TensorError::DataLength {
                len: self.freq.len().max(self.ampl.len()),
                shape: self.shape(),
            });
        }
        let mut seen = vec![usize::MAX; chunk_len];
        for c in 0..self.geometry.num_chunks() {
            for &f in self.chunk_freq(c) {
                let slot = seen.get_mut(f as usize).ok_or(TensorError::FrequencyOutOfRange {
                    index: f,
                    chunk_len,
                })?;
                if *slot == c {
                    return Err(TensorError::FrequencyOutOfRange {
                        index: f,
                        chunk_len,
                    });
                }
                *slot = c;
            }
        }
        Ok(())
    }
}

/// Ordering used for top-k: larger magnitude first, then lower index.
fn rank_order(a: &(u32, f64), b: &(u32, f64)) -> Ordering {
    b.1.abs()
        .total_cmp(&a.1.abs())
        .then_with(|| a.0.cmp(&b.0))
}

/// Selects the `k` coefficients of largest magnitude, ties to the lowest index.
/// Returned pairs are ordered by decreasing magnitude and keep their sign.
pub fn top_k_coefficients(coeffs: &[f64], k: usize) -> Vec<(u32, f64)> {
    let mut pairs: Vec<(u32, f64)> = coeffs.iter().enumerate().map(|(i, &v)| (i as u32, v)).collect();
    let k = k.min(pairs.len());
    if k == 0 {
        return Vec::new();
    }
    if k < pairs.len() {
        pairs.select_nth_unstable_by(k - 1, rank_order);
        pairs.truncate(k);
    }
    pairs.sort_unstable_by(rank_order);
    pairs
}

/// Chunk-wise dense DCT coefficients of a tensor, in 64-bit.
pub fn chunk_coefficients<T: Element>(
    m: &Tensor<T>,
    g: &ChunkGeometry,
    cache: &BasisCache,
) -> Result<ChunkedView<f64>, TensorError> {
    let view = chunk(&m.to_f64(), g)?;
    let shape = g.chunk_shape();
    let bases = cache.bases_for(shape);
    let order: Vec<usize> = (0..shape.len()).collect();
    let mut data = view.into_data();
    for block in data.chunks_mut(g.chunk_len()) {
        transform_in_place(block, shape, &bases, Direction::Forward, &order);
    }
    Ok(ChunkedView::from_chunks(shape.to_vec(), data))
}

fn inverse_blocks<T: Element>(
    mut blocks: Vec<f64>,
    g: &ChunkGeometry,
    cache: &BasisCache,
) -> Result<Tensor<T>, TensorError> {
    let shape = g.chunk_shape();
    let bases = cache.bases_for(shape);
    let order: Vec<usize> = (0..shape.len()).collect();
    for block in blocks.chunks_mut(g.chunk_len()) {
        transform_in_place(block, shape, &bases, Direction::Inverse, &order);
    }
    let view = ChunkedView::from_chunks(shape.to_vec(), blocks.into_iter().map(T::cast).collect());
    unchunk(&view, g)
}

/// Per chunk top-`k` DCT bins of `m`, plus the tensor `q` those bins
/// reconstruct to on their own.
///
/// `q` is computed by the same scatter and inverse path as
/// [`merge_and_reconstruct`] with a single contributor, so the two agree
/// bit for bit.
pub fn extract_fast_components<T: Element>(
    tensor_id: u32,
    m: &Tensor<T>,
    g: &ChunkGeometry,
    k: usize,
    cache: &BasisCache,
) -> Result<(Tensor<T>, CompressedComponents<T>), TensorError> {
    let chunk_len = g.chunk_len();
    if k == 0 || k > chunk_len {
        return Err(TensorError::InvalidK { k, max: chunk_len });
    }
    let coeffs = chunk_coefficients(m, g, cache)?;
    let mut freq = Vec::with_capacity(g.num_chunks() * k);
    let mut ampl = Vec::with_capacity(g.num_chunks() * k);
    for block in coeffs.chunks() {
        for (f, a) in top_k_coefficients(block, k) {
            freq.push(f);
            ampl.push(T::cast(a));
        }
    }
    let components = CompressedComponents {
        tensor_id,
        geometry: g.clone(),
        k,
        freq,
        ampl,
    };
    let q = merge_and_reconstruct(std::slice::from_ref(&components), g, cache, MergeRule::ContributorAverage)?;
    Ok((q, components))
}

/// Inverse transform over components gathered from every worker.
///
/// Bins chosen by several workers are averaged according to `rule`; bins no
/// worker chose are zero. Contributions are summed in list order.
pub fn merge_and_reconstruct<T: Element>(
    all_workers: &[CompressedComponents<T>],
    g: &ChunkGeometry,
    cache: &BasisCache,
    rule: MergeRule,
) -> Result<Tensor<T>, TensorError> {
    let first = all_workers.first().ok_or(TensorError::Empty)?;
    for c in all_workers {
        if &c.geometry != g || c.tensor_id != first.tensor_id {
            return Err(TensorError::GeometryMismatch);
        }
        if c.k != first.k {
            return Err(TensorError::KMismatch {
                expected: first.k,
                found: c.k,
            });
        }
        if c.freq.len() != g.num_chunks() * c.k || c.ampl.len() != c.freq.len() {
            return Err(TensorError::DataLength {
                len: c.freq.len(),
                shape: c.shape(),
            });
        }
    }
    let chunk_len = g.chunk_len();
    let k = first.k;
    let world = all_workers.len() as f64;
    let mut blocks = vec![0.0f64; g.num_elements()];
    let mut counts = vec![0u32; chunk_len];
    for (c, block) in blocks.chunks_mut(chunk_len).enumerate() {
        counts.iter_mut().for_each(|n| *n = 0);
        for w in all_workers {
            let span = c * k..(c + 1) * k;
            for (&f, &a) in w.freq[span.clone()].iter().zip(&w.ampl[span]) {
                let f = f as usize;
                if f >= chunk_len {
                    return Err(TensorError::FrequencyOutOfRange {
                        index: f as u32,
                        chunk_len,
                    });
                }
                block[f] += a.widen();
                counts[f] += 1;
            }
        }
        for (v, &n) in block.iter_mut().zip(&counts) {
            if n > 1 || (n == 1 && rule == MergeRule::WorldAverage) {
                *v /= match rule {
                    MergeRule::ContributorAverage => n as f64,
                    MergeRule::WorldAverage => world,
                };
            }
        }
    }
    inverse_blocks(blocks, g, cache)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::clamp_chunk_shape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0)).unwrap()
    }

    fn comps(k: usize, freq: Vec<u32>, ampl: Vec<f64>, g: &ChunkGeometry) -> CompressedComponents<f64> {
        CompressedComponents {
            tensor_id: 0,
            geometry: g.clone(),
            k,
            freq,
            ampl,
        }
    }

    #[test]
    fn top_k_keeps_signed_largest() {
        assert_eq!(top_k_coefficients(&[3.0, -5.0, 1.0, 2.0], 2), vec![(1, -5.0), (0, 3.0)]);
        assert_eq!(top_k_coefficients(&[2.0, -2.0, 0.0], 1), vec![(0, 2.0)]);
        assert_eq!(top_k_coefficients(&[0.0, 0.0, 0.0], 2), vec![(0, 0.0), (1, 0.0)]);
    }

    #[test]
    fn constant_momentum_lives_in_dc() {
        let cache = BasisCache::new();
        let g = ChunkGeometry::new([4, 6], [2, 3]).unwrap();
        let m = Tensor::filled([4, 6], 0.5f64).unwrap();
        let (q, c) = extract_fast_components(3, &m, &g, 1, &cache).unwrap();
        assert_eq!(c.shape(), vec![2, 2, 1]);
        assert!(c.freq.iter().all(|&f| f == 0));
        assert!(c.ampl.iter().all(|a| (a - 0.5 * 6f64.sqrt()).abs() < 1e-12));
        assert!(q.max_abs_diff(&m).unwrap() < 1e-12);
    }

    #[test]
    fn full_extraction_recovers_tensor() {
        let cache = BasisCache::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_tensor(&mut rng, &[8, 12]).cast::<f32>();
        let g = clamp_chunk_shape(m.shape(), 4).unwrap();
        let (q, c) = extract_fast_components(0, &m, &g, g.chunk_len(), &cache).unwrap();
        c.validate().unwrap();
        assert!(q.max_abs_diff(&m).unwrap() < 1e-5);
    }

    #[test]
    fn invalid_k() {
        let cache = BasisCache::new();
        let m = Tensor::<f32>::zeros([4]).unwrap();
        let g = ChunkGeometry::new([4], [2]).unwrap();
        assert_eq!(
            extract_fast_components(0, &m, &g, 3, &cache).unwrap_err(),
            TensorError::InvalidK { k: 3, max: 2 }
        );
        assert!(extract_fast_components(0, &m, &g, 0, &cache).is_err());
    }

    #[test]
    fn single_worker_merge_equals_q() {
        let cache = BasisCache::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_tensor(&mut rng, &[16, 8]).cast::<f32>();
        let g = clamp_chunk_shape(m.shape(), 8).unwrap();
        let (q, c) = extract_fast_components(0, &m, &g, 5, &cache).unwrap();
        let merged = merge_and_reconstruct(&[c], &g, &cache, MergeRule::ContributorAverage).unwrap();
        assert_eq!(merged, q);
    }

    fn merged_coefficients(workers: &[CompressedComponents<f64>], g: &ChunkGeometry, rule: MergeRule) -> Vec<f64> {
        let cache = BasisCache::new();
        let t = merge_and_reconstruct(workers, g, &cache, rule).unwrap();
        chunk_coefficients(&t, g, &cache).unwrap().into_data()
    }

    #[test]
    fn shared_bin_is_averaged() {
        let g = ChunkGeometry::new([8], [8]).unwrap();
        let a = comps(1, vec![5], vec![1.0], &g);
        let b = comps(1, vec![5], vec![3.0], &g);
        let coeffs = merged_coefficients(&[a, b], &g, MergeRule::ContributorAverage);
        assert!((coeffs[5] - 2.0).abs() < 1e-12);
        assert!(coeffs.iter().enumerate().all(|(i, v)| i == 5 || v.abs() < 1e-12));
    }

    #[test]
    fn disjoint_bins_pass_through() {
        let g = ChunkGeometry::new([8], [8]).unwrap();
        let a = comps(1, vec![3], vec![4.0], &g);
        let b = comps(1, vec![7], vec![-2.0], &g);
        let coeffs = merged_coefficients(&[a.clone(), b.clone()], &g, MergeRule::ContributorAverage);
        assert!((coeffs[3] - 4.0).abs() < 1e-12);
        assert!((coeffs[7] + 2.0).abs() < 1e-12);
        let world = merged_coefficients(&[a, b], &g, MergeRule::WorldAverage);
        assert!((world[3] - 2.0).abs() < 1e-12);
        assert!((world[7] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_workers_reproduce_single_worker() {
        let cache = BasisCache::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_tensor(&mut rng, &[8, 8]).cast::<f32>();
        let g = clamp_chunk_shape(m.shape(), 4).unwrap();
        let (q, c) = extract_fast_components(0, &m, &g, 3, &cache).unwrap();
        for w in 1..=5 {
            let all = vec![c.clone(); w];
            let merged = merge_and_reconstruct(&all, &g, &cache, MergeRule::ContributorAverage).unwrap();
            assert_eq!(merged, q, "w={w}");
        }
    }

    #[test]
    fn merge_rejects_mismatches() {
        let cache = BasisCache::new();
        let g = ChunkGeometry::new([8], [8]).unwrap();
        let other = ChunkGeometry::new([8], [4]).unwrap();
        let a = comps(1, vec![0], vec![1.0], &g);
        let b = comps(2, vec![0, 1], vec![1.0, 1.0], &g);
        assert!(matches!(
            merge_and_reconstruct(&[a.clone(), b], &g, &cache, MergeRule::ContributorAverage),
            Err(TensorError::KMismatch { .. })
        ));
        assert_eq!(
            merge_and_reconstruct(&[a.clone()], &other, &cache, MergeRule::ContributorAverage),
            Err(TensorError::GeometryMismatch)
        );
        let bad = comps(1, vec![9], vec![1.0], &g);
        assert!(merge_and_reconstruct(&[bad], &g, &cache, MergeRule::ContributorAverage).is_err());
        assert_eq!(
            merge_and_reconstruct::<f64>(&[], &g, &cache, MergeRule::ContributorAverage),
            Err(TensorError::Empty)
        );
    }

    #[test]
    fn validate_catches_duplicates() {
        let g = ChunkGeometry::new([8], [4]).unwrap();
        let ok = comps(2, vec![0, 1, 1, 0], vec![1.0; 4], &g);
        ok.validate().unwrap();
        let dup = comps(2, vec![0, 0, 1, 0], vec![1.0; 4], &g);
        assert!(dup.validate().is_err());
    }

    #[test]
    fn residual_energy_is_dropped_energy() {
        let cache = BasisCache::new();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = random_tensor(&mut rng, &[16, 16]);
        let g = clamp_chunk_shape(m.shape(), 8).unwrap();
        let coeffs = chunk_coefficients(&m, &g, &cache).unwrap();
        let mut prev = f64::INFINITY;
        for k in [1, 2, 4, 8, 16, 32, 64] {
            let (q, _) = extract_fast_components(0, &m, &g, k, &cache).unwrap();
            let mut r = m.clone();
            r.sub_assign(&q).unwrap();
            let dropped: f64 = coeffs
                .chunks()
                .map(|b| {
                    let kept: f64 = top_k_coefficients(b, k).iter().map(|(_, a)| a * a).sum();
                    b.iter().map(|v| v * v).sum::<f64>() - kept
                })
                .sum();
            assert!((r.sq_norm() - dropped).abs() <= 1e-9 * m.sq_norm());
            assert!(r.sq_norm() <= prev);
            prev = r.sq_norm();
        }
    }
}
