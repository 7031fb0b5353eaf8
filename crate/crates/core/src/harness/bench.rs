//! How much energy the top-k DCT coefficients capture compared with the
//! top-k raw samples, on synthetic 1-D signals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::compaction::top_k_coefficients;
use crate::dct::{transform_in_place, BasisCache, Direction};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Signal {
    /// Stationary unit-variance AR(1): `x_t = rho x_{t-1} + sqrt(1 - rho^2) e_t`.
    Ar1 { rho: f64 },
    White,
    /// A random nonzero level repeated over the whole signal.
    Constant,
}

impl Signal {
    pub fn parse(name: &str, rho: f64) -> Option<Self> {
        match name {
            "ar1" => Some(Signal::Ar1 { rho }),
            "white" => Some(Signal::White),
            "constant" => Some(Signal::Constant),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Signal::Ar1 { .. } => "ar1",
            Signal::White => "white",
            Signal::Constant => "constant",
        }
    }

    fn generate(&self, len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match *self {
            Signal::Ar1 { rho } => {
                let innov = (1.0 - rho * rho).sqrt();
                let mut x = Vec::with_capacity(len);
                let mut prev: f64 = rng.sample(StandardNormal);
                x.push(prev);
                for _ in 1..len {
                    let e: f64 = rng.sample(StandardNormal);
                    prev = rho * prev + innov * e;
                    x.push(prev);
                }
                x
            }
            Signal::White => (0..len).map(|_| rng.sample(StandardNormal)).collect(),
            Signal::Constant => {
                let level = 1.0 + rng.random::<f64>();
                vec![level; len]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchParams {
    pub signal: Signal,
    pub length: usize,
    /// Chunk length; must divide `length`.
    pub chunk: usize,
    pub k: usize,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchReport {
    /// Mean over trials of the energy fraction kept by per-chunk top-k DCT.
    pub dct_fraction: f64,
    /// Same, keeping the k largest raw samples per chunk.
    pub identity_fraction: f64,
    pub trials: usize,
}

impl BenchParams {
    pub fn validate(&self) -> Result<(), String> {
        if let Signal::Ar1 { rho } = self.signal {
            if !(rho.abs() < 1.0) {
                return Err(format!("rho must be in (-1, 1), got {rho}"));
            }
        }
        if self.length == 0 || self.chunk == 0 || self.length % self.chunk != 0 {
            return Err(format!("chunk {} must be positive and divide length {}", self.chunk, self.length));
        }
        if self.k == 0 || self.k > self.chunk {
            return Err(format!("k must be in [1, {}], got {}", self.chunk, self.k));
        }
        if self.trials == 0 {
            return Err("trials must be at least 1".into());
        }
        Ok(())
    }
}

fn top_k_energy(values: &[f64], k: usize) -> f64 {
    top_k_coefficients(values, k).iter().map(|(_, v)| v * v).sum()
}

pub fn bench_compaction(p: &BenchParams) -> Result<BenchReport, String> {
    p.validate()?;
    let cache = BasisCache::new();
    let basis = [cache.get(p.chunk)];
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let (mut dct_sum, mut id_sum) = (0.0, 0.0);
    for _ in 0..p.trials {
        let x = p.signal.generate(p.length, &mut rng);
        let total: f64 = x.iter().map(|v| v * v).sum();
        let (mut kept_dct, mut kept_id) = (0.0, 0.0);
        for c in x.chunks(p.chunk) {
            let mut coeffs = c.to_vec();
            transform_in_place(&mut coeffs, &[p.chunk], &basis, Direction::Forward, &[0]);
            kept_dct += top_k_energy(&coeffs, p.k);
            kept_id += top_k_energy(c, p.k);
        }
        // An all-zero signal has nothing to capture; count it as fully kept.
        let frac = |kept: f64| if total > 0.0 { (kept / total).min(1.0) } else { 1.0 };
        dct_sum += frac(kept_dct);
        id_sum += frac(kept_id);
    }
    Ok(BenchReport {
        dct_fraction: dct_sum / p.trials as f64,
        identity_fraction: id_sum / p.trials as f64,
        trials: p.trials,
    })
}
