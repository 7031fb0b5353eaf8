//! Synthetic datasets, sharding and deterministic batch order.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::model::{Batch, Targets};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub x: Vec<f64>,
    pub targets: Targets,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        let mut x = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            x.extend_from_slice(&self.x[i * self.dim..(i + 1) * self.dim]);
        }
        let targets = match &self.targets {
            Targets::Classes(c) => Targets::Classes(indices.iter().map(|&i| c[i]).collect()),
            Targets::Values { dim, values } => Targets::Values {
                dim: *dim,
                values: indices
                    .iter()
                    .flat_map(|&i| values[i * dim..(i + 1) * dim].iter().copied())
                    .collect(),
            },
            Targets::None => Targets::None,
        };
        Batch {
            dim: self.dim,
            x,
            targets,
        }
    }

    pub fn all(&self) -> Batch {
        Batch {
            dim: self.dim,
            x: self.x.clone(),
            targets: self.targets.clone(),
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Class centers drawn once; samples are `center + N(0, I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Blobs {
    pub dim: usize,
    pub centers: Vec<f64>,
}

impl Blobs {
    pub fn new(dim: usize, classes: usize, separation: f64, rng: &mut ChaCha8Rng) -> Self {
        Self {
            dim,
            centers: (0..dim * classes).map(|_| separation * normal(rng)).collect(),
        }
    }

    pub fn classes(&self) -> usize {
        self.centers.len() / self.dim
    }

    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Dataset {
        let classes = self.classes();
        let mut x = Vec::with_capacity(n * self.dim);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let c = rng.random_range(0..classes);
            labels.push(c);
            for d in 0..self.dim {
                x.push(self.centers[c * self.dim + d] + normal(rng));
            }
        }
        Dataset {
            dim: self.dim,
            x,
            targets: Targets::Classes(labels),
        }
    }
}

/// `y = W x + b + noise` with a random teacher.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearTeacher {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub noise: f64,
}

impl LinearTeacher {
    pub fn new(inputs: usize, outputs: usize, noise: f64, rng: &mut ChaCha8Rng) -> Self {
        let scale = 1.0 / (inputs as f64).sqrt();
        Self {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| scale * normal(rng)).collect(),
            bias: (0..outputs).map(|_| 0.1 * normal(rng)).collect(),
            noise,
        }
    }

    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Dataset {
        let x: Vec<f64> = (0..n * self.inputs).map(|_| normal(rng)).collect();
        let mut values = Vec::with_capacity(n * self.outputs);
        for s in 0..n {
            let xi = &x[s * self.inputs..(s + 1) * self.inputs];
            for o in 0..self.outputs {
                let w = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                let y: f64 = w.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>() + self.bias[o];
                values.push(y + self.noise * normal(rng));
            }
        }
        Dataset {
            dim: self.inputs,
            x,
            targets: Targets::Values {
                dim: self.outputs,
                values,
            },
        }
    }
}

/// Noisy linear terms `b_i = b + noise * N(0, I)` for the quadratic bowl.
pub fn bowl_samples(center: &[f64], noise: f64, n: usize, rng: &mut ChaCha8Rng) -> Dataset {
    let dim = center.len();
    let x = (0..n)
        .flat_map(|_| center.iter().map(|&c| c + noise * normal(rng)).collect::<Vec<_>>())
        .collect();
    Dataset {
        dim,
        x,
        targets: Targets::None,
    }
}

/// Contiguous, disjoint shard of `0..n` for `rank`.
pub fn shard_range(n: usize, world: usize, rank: usize) -> Range<usize> {
    rank * n / world..(rank + 1) * n / world
}

/// Reshuffles the shard every epoch; batches never straddle epochs.
#[derive(Debug, Clone)]
pub struct BatchIter {
    indices: Vec<usize>,
    pos: usize,
    batch: usize,
    rng: ChaCha8Rng,
}

impl BatchIter {
    pub fn new(shard: Range<usize>, batch: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(3);
        let mut indices: Vec<usize> = shard.collect();
        indices.shuffle(&mut rng);
        Self {
            indices,
            pos: 0,
            batch: batch.max(1),
            rng,
        }
    }

    pub fn next_indices(&mut self) -> &[usize] {
        let n = self.batch.min(self.indices.len());
        if self.pos + n > self.indices.len() {
            self.indices.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let s = &self.indices[self.pos..self.pos + n];
        self.pos += n;
        s
    }
}
