//! Decoupled momentum optimizer and the fully synchronized baselines it is
//! compared against.
//!
//! One DeMo step on a worker:
//!
//! 1. `m <- beta * m + g` with the worker's local gradient (no all-reduce)
//! 2. `(q, c) <- extract(m)`: top-k DCT bins per chunk and their reconstruction
//! 3. `m <- m - q`: only the slow residual stays local
//! 4. gather `c` from every worker, merge duplicate bins, invert to get `Q`
//! 5. `x <- x - lr * Q`, or `x <- x - lr * sign(Q)` in signum mode
//!
//! Every worker applies the same `Q`, so parameters stay identical while the
//! momenta drift apart.

use std::sync::Arc;

use thiserror::Error;

use crate::compaction::{extract_fast_components, merge_and_reconstruct, CompressedComponents, MergeRule};
use crate::dct::BasisCache;
use crate::error::TensorError;
use crate::tensor::{clamp_chunk_shape, ChunkGeometry, Element, Tensor};
use crate::transport::wire::effective_k;
use crate::transport::{Collective, PayloadEntry, SyncPayload, TransportError};

mod baseline;

pub use baseline::{BaselineKind, BaselineOptimizer};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizerError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("invalid optimizer config: {0}")]
    Config(String),
    #[error("gathered payloads do not match local state: {0}")]
    PayloadMismatch(String),
    #[error("apply called without a prepared step")]
    NotPrepared,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoConfig {
    pub lr: f64,
    pub beta: f64,
    /// Requested chunk edge; clamped per dimension to a divisor.
    pub chunk: usize,
    pub k: usize,
    pub signum: bool,
    pub merge_rule: MergeRule,
    pub weight_decay: f64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta: 0.999,
            chunk: 64,
            k: 32,
            signum: true,
            merge_rule: MergeRule::ContributorAverage,
            weight_decay: 0.0,
        }
    }
}

impl DemoConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(OptimizerError::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(OptimizerError::Config(format!("beta must be in (0, 1), got {}", self.beta)));
        }
        if self.k == 0 {
            return Err(OptimizerError::Config("k must be at least 1".into()));
        }
        if self.chunk == 0 {
            return Err(OptimizerError::Config("chunk must be at least 1".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(OptimizerError::Config("weight_decay must be non-negative".into()));
        }
        Ok(())
    }
}

/// Optimizer state for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoParamState<T> {
    pub tensor_id: u32,
    pub params: Tensor<T>,
    pub momentum: Tensor<T>,
    pub geometry: ChunkGeometry,
    /// `k` after capping at the chunk size.
    pub k: usize,
    pub step_count: u64,
}

/// What one step did, for logging.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    /// L2 norm of the merged update `Q` over all tensors.
    pub q_norm: f64,
    /// L2 norm of the locally extracted `q` over all tensors.
    pub local_q_norm: f64,
    /// L2 norm of the momentum residual left on this worker.
    pub residual_norm: f64,
}

#[derive(Debug)]
pub struct DemoOptimizer<T> {
    cfg: DemoConfig,
    states: Vec<DemoParamState<T>>,
    cache: Arc<BasisCache>,
    prepared: Option<(u32, f64, f64)>,
}

impl<T: Element> DemoOptimizer<T> {
    /// Tensor ids are the positions in `params`.
    pub fn new(cfg: DemoConfig, params: Vec<Tensor<T>>, cache: Arc<BasisCache>) -> Result<Self, OptimizerError> {
        cfg.validate()?;
        let states = params
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                let geometry = clamp_chunk_shape(p.shape(), cfg.chunk)?;
                Ok(DemoParamState {
                    tensor_id: i as u32,
                    momentum: Tensor::zeros_like(&p),
                    k: effective_k(cfg.k, &geometry),
                    params: p,
                    geometry,
                    step_count: 0,
                })
            })
            .collect::<Result<Vec<_>, TensorError>>()?;
        Ok(Self {
            cfg,
            states,
            cache,
            prepared: None,
        })
    }

    pub fn config(&self) -> &DemoConfig {
        &self.cfg
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    pub fn states(&self) -> &[DemoParamState<T>] {
        &self.states
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.states.iter().map(|s| &s.params).collect()
    }

    pub fn geometries(&self) -> Vec<ChunkGeometry> {
        self.states.iter().map(|s| s.geometry.clone()).collect()
    }

    pub fn step_count(&self) -> u64 {
        self.states.first().map_or(0, |s| s.step_count)
    }

    /// Elements of persistent optimizer state: one momentum per parameter.
    pub fn state_elements(&self) -> usize {
        self.states.iter().map(|s| s.momentum.len()).sum()
    }

    /// First half of a step: accumulate, extract and remove fast components.
    pub fn prepare(&mut self, rank: usize, grads: &[Tensor<T>]) -> Result<SyncPayload, OptimizerError> {
        if grads.len() != self.states.len() {
            return Err(OptimizerError::PayloadMismatch(format!(
                "{} gradients for {} parameters",
                grads.len(),
                self.states.len()
            )));
        }
        let beta = T::cast(self.cfg.beta);
        let mut entries = Vec::with_capacity(self.states.len());
        let mut local_q = 0.0;
        let mut residual = 0.0;
        for (s, g) in self.states.iter_mut().zip(grads) {
            s.params.ensure_same_shape(g)?;
            s.momentum.scale(beta);
            s.momentum.axpy(T::one(), g)?;
            let (q, c) = extract_fast_components(s.tensor_id, &s.momentum, &s.geometry, s.k, &self.cache)?;
            s.momentum.sub_assign(&q)?;
            local_q += q.sq_norm();
            residual += s.momentum.sq_norm();
            entries.push(PayloadEntry::from_components(&c));
        }
        let step = self.step_count() as u32;
        self.prepared = Some((step, local_q.sqrt(), residual.sqrt()));
        Ok(SyncPayload::new(rank, step, entries))
    }

    /// Second half of a step: merge every worker's components and update.
    pub fn apply(&mut self, gathered: &[SyncPayload]) -> Result<StepReport, OptimizerError> {
        let (step, local_q_norm, residual_norm) = self.prepared.take().ok_or(OptimizerError::NotPrepared)?;
        if gathered.is_empty() {
            return Err(OptimizerError::PayloadMismatch("no payloads".into()));
        }
        for p in gathered {
            if p.step != step {
                return Err(OptimizerError::PayloadMismatch(format!(
                    "payload from rank {} is for step {}, expected {step}",
                    p.rank, p.step
                )));
            }
            if p.entries.len() != self.states.len() {
                return Err(OptimizerError::PayloadMismatch(format!(
                    "rank {} sent {} tensors, expected {}",
                    p.rank,
                    p.entries.len(),
                    self.states.len()
                )));
            }
        }
        let lr = T::cast(self.cfg.lr);
        let decay = T::cast(1.0 - self.cfg.lr * self.cfg.weight_decay);
        let mut q_sq = 0.0;
        for (i, s) in self.states.iter_mut().enumerate() {
            let components = gathered
                .iter()
                .map(|p| {
                    let e = &p.entries[i];
                    if e.tensor_id != s.tensor_id {
                        return Err(OptimizerError::PayloadMismatch(format!(
                            "rank {} entry {i} has tensor id {}",
                            p.rank, e.tensor_id
                        )));
                    }
                    Ok(e.to_components::<T>(&s.geometry)?)
                })
                .collect::<Result<Vec<CompressedComponents<T>>, OptimizerError>>()?;
            let merged = merge_and_reconstruct(&components, &s.geometry, &self.cache, self.cfg.merge_rule)?;
            q_sq += merged.sq_norm();
            if self.cfg.weight_decay > 0.0 {
                s.params.scale(decay);
            }
            let direction = if self.cfg.signum { merged.sign() } else { merged };
            s.params.axpy(-lr, &direction)?;
            s.step_count += 1;
        }
        Ok(StepReport {
            q_norm: q_sq.sqrt(),
            local_q_norm,
            residual_norm,
        })
    }

    /// Full step over a collective.
    pub fn step<C: Collective + ?Sized>(
        &mut self,
        grads: &[Tensor<T>],
        collective: &mut C,
    ) -> Result<StepReport, OptimizerError> {
        let payload = self.prepare(collective.rank(), grads)?;
        let gathered = collective.all_gather(&payload)?;
        self.apply(&gathered)
    }
}

/// Elementwise sign with `sign(0) = 0`.
pub fn sign<T: Element>(t: &Tensor<T>) -> Tensor<T> {
    t.sign()
}

/// Rank-ordered mean of per-worker gradients, accumulated in 64-bit.
pub fn mean_gradients<T: Element>(per_worker: &[Vec<Tensor<T>>]) -> Result<Vec<Tensor<T>>, TensorError> {
    let first = per_worker.first().ok_or(TensorError::Empty)?;
    let w = per_worker.len() as f64;
    first
        .iter()
        .enumerate()
        .map(|(i, t0)| {
            let mut acc = vec![0.0f64; t0.len()];
            for grads in per_worker {
                let g = &grads[i];
                t0.ensure_same_shape(g)?;
                for (a, v) in acc.iter_mut().zip(g.data()) {
                    *a += v.widen();
                }
            }
            Tensor::new(t0.shape().to_vec(), acc.into_iter().map(|a| T::cast(a / w)).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::MemoryHub;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::time::Duration;

    fn cfg(k: usize, chunk: usize, signum: bool) -> DemoConfig {
        DemoConfig {
            lr: 0.1,
            beta: 0.9,
            chunk,
            k,
            signum,
            merge_rule: MergeRule::ContributorAverage,
            weight_decay: 0.0,
        }
    }

    #[test]
    fn config_validation() {
        assert!(cfg(1, 4, true).validate().is_ok());
        assert!(DemoConfig { beta: 1.0, ..cfg(1, 4, true) }.validate().is_err());
        assert!(DemoConfig { beta: 0.0, ..cfg(1, 4, true) }.validate().is_err());
        assert!(DemoConfig { lr: 0.0, ..cfg(1, 4, true) }.validate().is_err());
        assert!(cfg(0, 4, true).validate().is_err());
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let x = Tensor::new([4], vec![1.0f32, -2.0, 3.0, 0.5]).unwrap();
        let mut opt = DemoOptimizer::new(cfg(2, 4, true), vec![x.clone()], Arc::new(BasisCache::new())).unwrap();
        let mut c = MemoryHub::create(1, Duration::from_secs(5)).pop().unwrap();
        for _ in 0..3 {
            opt.step(&[Tensor::zeros([4]).unwrap()], &mut c).unwrap();
        }
        assert_eq!(opt.states()[0].params, x);
        c.finish();
    }

    #[test]
    fn full_extraction_is_plain_sgd_and_flushes_momentum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::<f32>::from_fn([8, 8], |_| rng.random_range(-1.0..1.0)).unwrap();
        let g = Tensor::<f32>::from_fn([8, 8], |_| rng.random_range(-1.0..1.0)).unwrap();
        let mut opt = DemoOptimizer::new(cfg(16, 4, false), vec![x.clone()], Arc::new(BasisCache::new())).unwrap();
        let mut c = MemoryHub::create(1, Duration::from_secs(5)).pop().unwrap();
        opt.step(std::slice::from_ref(&g), &mut c).unwrap();
        let mut expected = x;
        expected.axpy(-0.1, &g).unwrap();
        assert!(opt.states()[0].params.max_abs_diff(&expected).unwrap() < 1e-6);
        assert!(opt.states()[0].momentum.max_abs() < 1e-5);
        c.finish();
    }

    #[test]
    fn decay_is_applied_before_update() {
        let x = Tensor::new([2], vec![2.0f64, -4.0]).unwrap();
        let conf = DemoConfig {
            weight_decay: 0.5,
            ..cfg(2, 2, true)
        };
        let mut opt = DemoOptimizer::new(conf, vec![x], Arc::new(BasisCache::new())).unwrap();
        let g = Tensor::new([2], vec![1.0, -1.0]).unwrap();
        let p = opt.prepare(0, &[g]).unwrap();
        opt.apply(&[p]).unwrap();
        // x * (1 - 0.1 * 0.5) - 0.1 * sign(g)
        let got = opt.states()[0].params.data().to_vec();
        assert!((got[0] - (2.0 * 0.95 - 0.1)).abs() < 1e-12);
        assert!((got[1] - (-4.0 * 0.95 + 0.1)).abs() < 1e-12);
    }

    #[test]
    fn apply_checks_payloads() {
        let x = Tensor::<f32>::zeros([4]).unwrap();
        let mut opt = DemoOptimizer::new(cfg(1, 4, true), vec![x.clone()], Arc::new(BasisCache::new())).unwrap();
        assert_eq!(opt.apply(&[]), Err(OptimizerError::NotPrepared));
        let g = Tensor::<f32>::zeros([4]).unwrap();
        let mut p = opt.prepare(0, std::slice::from_ref(&g)).unwrap();
        p.step += 1;
        assert!(matches!(opt.apply(&[p]), Err(OptimizerError::PayloadMismatch(_))));
        assert!(opt.prepare(0, &[g.clone(), g]).is_err());
    }

    #[test]
    fn mean_of_gradients() {
        let a = vec![Tensor::new([2], vec![1.0f32, 2.0]).unwrap()];
        let b = vec![Tensor::new([2], vec![3.0f32, -2.0]).unwrap()];
        let m = mean_gradients(&[a, b]).unwrap();
        assert_eq!(m[0].data(), &[2.0, 0.0]);
    }
}
