//! Browser bindings for the static demo page in `www/`.
//!
//! Everything runs on the page's thread: training uses the `local`
//! transport, which steps the workers in turn through the same wire encoding
//! as the threaded transports.

use wasm_bindgen::prelude::*;

use demo_core::config::{ModelKind, OptimizerKind, RunConfig, TransportKind};
use demo_core::harness::bench::{bench_compaction, BenchParams, Signal};
use demo_core::transport::bytes_per_step;
use demo_core::{clamp_chunk_shape, run_experiment, DType, RunMetrics};

/// Mean energy fraction kept by the top-k DCT coefficients and by the top-k
/// raw samples of each chunk, for every `k` in `1..=chunk`.
///
/// Returns `[dct(1), .., dct(chunk), raw(1), .., raw(chunk)]`.
#[wasm_bindgen(js_name = energyCurve)]
pub fn energy_curve(
    signal: &str,
    rho: f64,
    length: usize,
    chunk: usize,
    trials: usize,
    seed: u32,
) -> Result<Vec<f64>, String> {
    let signal = Signal::parse(signal, rho).ok_or_else(|| format!("unknown signal `{signal}`"))?;
    let mut dct = Vec::with_capacity(chunk);
    let mut raw = Vec::with_capacity(chunk);
    for k in 1..=chunk {
        let r = bench_compaction(&BenchParams {
            signal,
            length,
            chunk,
            k,
            trials,
            seed: seed as u64,
        })?;
        dct.push(r.dct_fraction);
        raw.push(r.identity_fraction);
    }
    dct.extend(raw);
    Ok(dct)
}

/// Per-step traffic for one `rows x cols` matrix.
///
/// Returns `[payload, message, received, dense]`: encoded component bytes,
/// bytes each worker sends, bytes each worker receives, and the size of the
/// same matrix sent densely as 32-bit floats.
#[wasm_bindgen(js_name = bytesPerStep)]
pub fn bytes_per_step_for(rows: usize, cols: usize, chunk: usize, k: usize, workers: usize) -> Result<Vec<f64>, String> {
    if workers == 0 || k == 0 {
        return Err("workers and k must be at least 1".into());
    }
    let g = clamp_chunk_shape(&[rows, cols], chunk).map_err(|e| e.to_string())?;
    let b = bytes_per_step(&[g], k, workers);
    Ok(vec![
        b.payload as f64,
        b.message as f64,
        b.received as f64,
        (4 * rows * cols) as f64,
    ])
}

/// Loss curves of DeMo and synchronized Signum on the same problem.
#[wasm_bindgen]
pub struct Comparison {
    demo: RunMetrics,
    signum: RunMetrics,
}

fn losses(m: &RunMetrics) -> Vec<f64> {
    m.rows.iter().map(|r| r.train_loss).collect()
}

#[wasm_bindgen]
impl Comparison {
    #[wasm_bindgen(getter, js_name = demoLoss)]
    pub fn demo_loss(&self) -> Vec<f64> {
        losses(&self.demo)
    }

    #[wasm_bindgen(getter, js_name = signumLoss)]
    pub fn signum_loss(&self) -> Vec<f64> {
        losses(&self.signum)
    }

    #[wasm_bindgen(getter, js_name = demoFinalLoss)]
    pub fn demo_final_loss(&self) -> f64 {
        self.demo.final_train_loss
    }

    #[wasm_bindgen(getter, js_name = signumFinalLoss)]
    pub fn signum_final_loss(&self) -> f64 {
        self.signum.final_train_loss
    }

    #[wasm_bindgen(getter, js_name = demoAccuracy)]
    pub fn demo_accuracy(&self) -> f64 {
        self.demo.final_eval_accuracy.unwrap_or(f64::NAN)
    }

    #[wasm_bindgen(getter, js_name = signumAccuracy)]
    pub fn signum_accuracy(&self) -> f64 {
        self.signum.final_eval_accuracy.unwrap_or(f64::NAN)
    }

    /// Bytes each DeMo worker sends per step.
    #[wasm_bindgen(getter, js_name = demoBytesPerStep)]
    pub fn demo_bytes_per_step(&self) -> f64 {
        self.demo.mean_bytes_sent()
    }

    /// Bytes each Signum worker sends per step as a dense 32-bit gradient.
    #[wasm_bindgen(getter, js_name = signumBytesPerStep)]
    pub fn signum_bytes_per_step(&self) -> f64 {
        self.signum.mean_bytes_sent()
    }
}

/// Config used by [`compare_training`]: softmax regression on Gaussian blobs.
pub fn comparison_config(workers: usize, steps: u32, chunk: usize, k: usize, lr: f64, seed: u32) -> RunConfig {
    let mut c = RunConfig::default();
    c.model.kind = ModelKind::Logistic;
    c.data.features = 64;
    c.data.classes = 8;
    c.data.separation = 0.2;
    c.data.samples = 4096;
    c.data.eval_samples = 512;
    c.optimizer.lr = lr;
    c.optimizer.chunk = chunk;
    c.optimizer.k = k;
    c.transport.kind = TransportKind::Local;
    c.run.workers = workers;
    c.run.steps = steps as u64;
    c.run.seed = seed as u64;
    c.run.dtype = DType::F32;
    c
}

/// Trains DeMo (signum, beta 0.999) and synchronized Signum (beta 0.9) from
/// the same start on the same data.
#[wasm_bindgen(js_name = compareTraining)]
pub fn compare_training(
    workers: usize,
    steps: u32,
    chunk: usize,
    k: usize,
    lr: f64,
    seed: u32,
) -> Result<Comparison, String> {
    let mut cfg = comparison_config(workers, steps, chunk, k, lr, seed);
    cfg.optimizer.kind = OptimizerKind::Demo;
    let demo = run_experiment(&cfg).map_err(|e| e.to_string())?;
    cfg.optimizer.kind = OptimizerKind::Signum;
    let signum = run_experiment(&cfg).map_err(|e| e.to_string())?;
    Ok(Comparison { demo, signum })
}
