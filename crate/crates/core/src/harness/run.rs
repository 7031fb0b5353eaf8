//! Lockstep training runs.
//!
//! Seeds: everything derives from `run.seed`. The problem (teacher, class
//! centers or bowl) and the training set come from ChaCha8 stream 0, the
//! held-out set from stream 1 and the initial parameters from stream 2, all
//! keyed by `run.seed`. Worker `r` draws its batch order from seed
//! `run.seed + r` on stream 3 over its own contiguous shard.
//!
//! DeMo workers run on threads over the configured transport, or in turn on
//! the calling thread for `local`; all three paths go through the same wire
//! encoding. Baselines have no sparse payload to exchange and are simulated
//! on one thread as an exact all-reduce of the per-worker gradients.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use super::data::{bowl_samples, shard_range, BatchIter, Blobs, Dataset, LinearTeacher};
use super::metrics::{MetricsRow, RunMetrics};
use super::model::{DenseNet, Head, Model, QuadraticBowl};
use crate::config::{ConfigError, ModelKind, OptimizerKind, RunConfig, TransportKind};
use crate::dct::BasisCache;
use crate::optimizer::{mean_gradients, BaselineKind, BaselineOptimizer, DemoConfig, DemoOptimizer, OptimizerError};
use crate::tensor::{DType, Element, Tensor};
use crate::transport::{
    decode_gathered, serialize, Collective, CommLedger, CommRecord, MemoryHub, SyncPayload, TcpCollective,
    TransportError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error("transport error: {0}")]
    Transport(TransportError),
    #[error("optimizer error: {0}")]
    Optimizer(OptimizerError),
    #[error("worker parameters diverged at step {step}")]
    Divergence { step: u64 },
    #[error("worker {rank} panicked")]
    WorkerPanic { rank: usize },
}

impl From<TransportError> for HarnessError {
    fn from(e: TransportError) -> Self {
        HarnessError::Transport(e)
    }
}

impl From<OptimizerError> for HarnessError {
    fn from(e: OptimizerError) -> Self {
        match e {
            OptimizerError::Transport(t) => HarnessError::Transport(t),
            OptimizerError::Config(m) => HarnessError::Config(ConfigError::new(m)),
            other => HarnessError::Optimizer(other),
        }
    }
}

/// Model, data and starting point shared by every worker.
#[derive(Debug, Clone)]
pub struct Problem<T> {
    pub model: Model,
    pub train: Dataset,
    pub eval: Dataset,
    pub init: Vec<Tensor<T>>,
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn build_problem<T: Element>(cfg: &RunConfig) -> Problem<T> {
    let (m, d) = (&cfg.model, &cfg.data);
    let mut data_rng = rng_stream(cfg.run.seed, 0);
    let mut eval_rng = rng_stream(cfg.run.seed, 1);
    let mut init_rng = rng_stream(cfg.run.seed, 2);
    let dense = |sizes: Vec<usize>, head| {
        Model::Dense(DenseNet {
            sizes,
            activation: m.activation,
            bias: m.bias,
            head,
        })
    };
    let (model, train, eval) = match m.kind {
        ModelKind::Quadratic => {
            let bowl = QuadraticBowl::random(vec![m.rows, m.cols], &mut data_rng);
            let center: Vec<f64> = (0..bowl.dim()).map(|_| data_rng.sample(StandardNormal)).collect();
            let train = bowl_samples(&center, d.noise, d.samples, &mut data_rng);
            let eval = bowl_samples(&center, d.noise, d.eval_samples, &mut eval_rng);
            (Model::Quadratic(bowl), train, eval)
        }
        ModelKind::Linear => {
            let teacher = LinearTeacher::new(d.features, d.outputs, d.noise, &mut data_rng);
            let train = teacher.sample(d.samples, &mut data_rng);
            let eval = teacher.sample(d.eval_samples, &mut eval_rng);
            (dense(vec![d.features, d.outputs], Head::Mse), train, eval)
        }
        ModelKind::Logistic | ModelKind::Mlp => {
            let blobs = Blobs::new(d.features, d.classes, d.separation, &mut data_rng);
            let train = blobs.sample(d.samples, &mut data_rng);
            let eval = blobs.sample(d.eval_samples, &mut eval_rng);
            let mut sizes = vec![d.features];
            if m.kind == ModelKind::Mlp {
                sizes.extend(std::iter::repeat_n(m.hidden, m.layers));
            }
            sizes.push(d.classes);
            (dense(sizes, Head::Softmax), train, eval)
        }
    };
    let init = model.init_params(&mut init_rng);
    Problem {
        model,
        train,
        eval,
        init,
    }
}

/// Runs the configured experiment and returns its metrics.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunMetrics, HarnessError> {
    cfg.validate()?;
    match cfg.run.dtype {
        DType::F32 => run_typed::<f32>(cfg),
        DType::F64 => run_typed::<f64>(cfg),
    }
}

fn run_typed<T: Element>(cfg: &RunConfig) -> Result<RunMetrics, HarnessError> {
    let problem = Arc::new(build_problem::<T>(cfg));
    let cfg = Arc::new(cfg.clone());
    let start = cfg.run.record_wall_clock.then(Instant::now);
    let outcome = match cfg.optimizer.kind {
        OptimizerKind::Demo => run_demo(&cfg, &problem, start)?,
        _ => run_baseline(&cfg, &problem, start)?,
    };
    assemble(&cfg, &problem, outcome)
}

/// Run start time, only taken when wall-clock recording is on.
type Clock = Option<Instant>;

fn elapsed_ms(start: Clock) -> f64 {
    start.map_or(0.0, |s| s.elapsed().as_secs_f64() * 1e3)
}

fn is_eval_step(cfg: &RunConfig, t: u64) -> bool {
    t == cfg.run.steps || (cfg.run.eval_every > 0 && t % cfg.run.eval_every == 0)
}

fn evaluate<T: Element>(problem: &Problem<T>, params: &[Tensor<T>]) -> (f64, Option<f64>) {
    let batch = problem.eval.all();
    (problem.model.loss(params, &batch), problem.model.accuracy(params, &batch))
}

fn param_digest<T: Element>(params: &[Tensor<T>]) -> u64 {
    let mut h = DefaultHasher::new();
    for p in params {
        for v in p.data() {
            h.write_u64(v.widen().to_bits());
        }
    }
    h.finish()
}

fn grad_norm<T: Element>(grads: &[Tensor<T>]) -> f64 {
    grads.iter().map(Tensor::sq_norm).sum::<f64>().sqrt()
}

/// What one worker reports for one step.
#[derive(Debug, Clone)]
struct StepLog {
    loss: f64,
    grad_norm: f64,
    q_norm: f64,
    record: CommRecord,
    param_digest: u64,
    eval: Option<(f64, Option<f64>)>,
    wall_ms: f64,
}

struct WorkerResult<T> {
    logs: Vec<StepLog>,
    ledger: CommLedger,
    frame_digest: u64,
    params: Vec<Tensor<T>>,
}

struct Outcome<T> {
    per_worker: Vec<Vec<StepLog>>,
    ledger: CommLedger,
    frame_digest: u64,
    params: Vec<Tensor<T>>,
}

struct Worker<T: Element> {
    rank: usize,
    opt: DemoOptimizer<T>,
    batches: BatchIter,
    problem: Arc<Problem<T>>,
    cfg: Arc<RunConfig>,
    pending: Option<(f64, f64)>,
    frames: DefaultHasher,
    logs: Vec<StepLog>,
}

impl<T: Element> Worker<T> {
    fn new(
        rank: usize,
        cfg: &Arc<RunConfig>,
        problem: &Arc<Problem<T>>,
        cache: &Arc<BasisCache>,
    ) -> Result<Self, HarnessError> {
        let o = &cfg.optimizer;
        let demo = DemoConfig {
            lr: o.lr,
            beta: o.beta(),
            chunk: o.chunk,
            k: o.k,
            signum: o.signum,
            merge_rule: o.merge,
            weight_decay: o.weight_decay(),
        };
        let opt = DemoOptimizer::new(demo, problem.init.clone(), Arc::clone(cache))?;
        Ok(Self {
            rank,
            opt,
            batches: worker_batches(cfg, rank),
            problem: Arc::clone(problem),
            cfg: Arc::clone(cfg),
            pending: None,
            frames: DefaultHasher::new(),
            logs: Vec::with_capacity(cfg.run.steps as usize),
        })
    }

    fn params(&self) -> Vec<Tensor<T>> {
        self.opt.params().into_iter().cloned().collect()
    }

    /// Computes the local gradient and the payload for step `t` (1-based).
    fn begin(&mut self, t: u64) -> Result<SyncPayload, HarnessError> {
        self.opt.set_lr(self.cfg.optimizer.lr_at(t));
        let batch = self.problem.train.batch(self.batches.next_indices());
        let (loss, grads) = self.problem.model.loss_grad(&self.params(), &batch);
        self.pending = Some((loss, grad_norm(&grads)));
        Ok(self.opt.prepare(self.rank, &grads)?)
    }

    fn finish(&mut self, t: u64, gathered: &[SyncPayload], record: CommRecord, start: Clock) -> Result<(), HarnessError> {
        for p in gathered {
            self.frames.write(&serialize(p).map_err(TransportError::from)?);
        }
        let report = self.opt.apply(gathered)?;
        let (loss, grad_norm) = self.pending.take().expect("begin precedes finish");
        let params = self.params();
        let eval = (self.rank == 0 && is_eval_step(&self.cfg, t)).then(|| evaluate(&self.problem, &params));
        self.logs.push(StepLog {
            loss,
            grad_norm,
            q_norm: report.q_norm,
            record,
            param_digest: param_digest(&params),
            eval,
            wall_ms: elapsed_ms(start),
        });
        Ok(())
    }

    fn into_result(self, ledger: CommLedger) -> WorkerResult<T> {
        let params = self.params();
        WorkerResult {
            logs: self.logs,
            ledger,
            frame_digest: self.frames.finish(),
            params,
        }
    }
}

fn worker_batches(cfg: &RunConfig, rank: usize) -> BatchIter {
    BatchIter::new(
        shard_range(cfg.data.samples, cfg.run.workers, rank),
        cfg.data.batch,
        cfg.run.seed.wrapping_add(rank as u64),
    )
}

fn run_demo<T: Element>(
    cfg: &Arc<RunConfig>,
    problem: &Arc<Problem<T>>,
    start: Clock,
) -> Result<Outcome<T>, HarnessError> {
    let world = cfg.run.workers;
    let cache = Arc::new(BasisCache::new());
    let workers = (0..world)
        .map(|r| Worker::new(r, cfg, problem, &cache))
        .collect::<Result<Vec<_>, _>>()?;
    let timeout = Duration::from_secs_f64(cfg.transport.timeout_secs);
    let results = match cfg.transport.kind {
        TransportKind::Local => run_local(workers, cfg.run.steps, start)?,
        TransportKind::Memory => {
            let collectives = MemoryHub::create(world, timeout);
            let jobs = workers
                .into_iter()
                .zip(collectives)
                .map(|(w, c)| (w, move || Ok(c), |c: crate::transport::MemoryCollective| c.finish()))
                .collect();
            run_threads(jobs, cfg.run.steps, start)?
        }
        TransportKind::Tcp => {
            let listeners = TcpCollective::bind_local(&cfg.transport.host, cfg.transport.base_port, world)?;
            let addrs: Vec<SocketAddr> = listeners
                .iter()
                .map(|l| l.local_addr().map_err(|e| TransportError::Setup(e.to_string())))
                .collect::<Result<_, _>>()?;
            let jobs = workers
                .into_iter()
                .zip(listeners)
                .map(|(w, l)| {
                    let addrs = addrs.clone();
                    let rank = w.rank;
                    (
                        w,
                        move || TcpCollective::establish(rank, l, &addrs, timeout),
                        TcpCollective::into_ledger,
                    )
                })
                .collect();
            run_threads(jobs, cfg.run.steps, start)?
        }
    };
    let mut results = results.into_iter();
    let first = results.next().expect("at least one worker");
    let mut per_worker = vec![first.logs];
    per_worker.extend(results.map(|r| r.logs));
    Ok(Outcome {
        per_worker,
        ledger: first.ledger,
        frame_digest: first.frame_digest,
        params: first.params,
    })
}

/// Steps every worker in turn on this thread, exchanging through the wire
/// encoding without a transport.
fn run_local<T: Element>(
    mut workers: Vec<Worker<T>>,
    steps: u64,
    start: Clock,
) -> Result<Vec<WorkerResult<T>>, HarnessError> {
    let mut ledgers: Vec<CommLedger> = workers.iter().map(|_| CommLedger::new()).collect();
    for t in 1..=steps {
        let payloads = workers.iter_mut().map(|w| w.begin(t)).collect::<Result<Vec<_>, _>>()?;
        let frames = payloads
            .iter()
            .map(serialize)
            .collect::<Result<Vec<_>, _>>()
            .map_err(TransportError::from)?;
        for (r, w) in workers.iter_mut().enumerate() {
            let (gathered, record) = decode_gathered(r, &payloads[r], &frames)?;
            ledgers[r].record(record.clone());
            w.finish(t, &gathered, record, start)?;
        }
    }
    Ok(workers.into_iter().zip(ledgers).map(|(w, l)| w.into_result(l)).collect())
}

/// One thread per worker. `connect` runs on the worker's thread so that
/// mesh setup can proceed concurrently; `done` releases the collective.
fn run_threads<T, C, F, D>(jobs: Vec<(Worker<T>, F, D)>, steps: u64, start: Clock) -> Result<Vec<WorkerResult<T>>, HarnessError>
where
    T: Element,
    C: Collective,
    F: FnOnce() -> Result<C, TransportError> + Send + 'static,
    D: FnOnce(C) -> CommLedger + Send + 'static,
{
    let handles: Vec<_> = jobs
        .into_iter()
        .map(|(mut w, connect, done)| {
            thread::spawn(move || -> Result<WorkerResult<T>, HarnessError> {
                let mut coll = connect()?;
                for t in 1..=steps {
                    let payload = w.begin(t)?;
                    let gathered = coll.all_gather(&payload)?;
                    let record = coll.ledger().last().cloned().expect("all_gather records");
                    w.finish(t, &gathered, record, start)?;
                }
                Ok(w.into_result(done(coll)))
            })
        })
        .collect();
    let results: Vec<Result<WorkerResult<T>, HarnessError>> = handles
        .into_iter()
        .enumerate()
        .map(|(rank, h)| h.join().unwrap_or(Err(HarnessError::WorkerPanic { rank })))
        .collect();
    // A failing worker makes its peers fail with disconnects; report the cause.
    let root_cause = results.iter().find_map(|r| match r {
        Err(HarnessError::Transport(TransportError::PeerDisconnected { .. })) | Ok(_) => None,
        Err(e) => Some(e.clone()),
    });
    if let Some(e) = root_cause {
        return Err(e);
    }
    results.into_iter().collect()
}

fn baseline_kind(cfg: &RunConfig) -> BaselineKind {
    let o = &cfg.optimizer;
    match o.kind {
        OptimizerKind::Sgd => BaselineKind::SgdMomentum { beta: o.beta() },
        OptimizerKind::Signum => BaselineKind::Signum { beta: o.beta() },
        OptimizerKind::AdamW => BaselineKind::AdamW {
            beta1: o.beta1,
            beta2: o.beta2,
            eps: o.eps,
        },
        OptimizerKind::Demo => unreachable!("DeMo is not a baseline"),
    }
}

/// Fully synchronized baseline. Traffic is accounted as a dense 32-bit
/// exchange of the gradient: each worker sends its full gradient once and
/// receives everyone else's.
fn run_baseline<T: Element>(
    cfg: &Arc<RunConfig>,
    problem: &Arc<Problem<T>>,
    start: Clock,
) -> Result<Outcome<T>, HarnessError> {
    let world = cfg.run.workers;
    let mut opt = BaselineOptimizer::new(
        baseline_kind(cfg),
        cfg.optimizer.lr,
        cfg.optimizer.weight_decay(),
        problem.init.clone(),
    );
    let mut batches: Vec<BatchIter> = (0..world).map(|r| worker_batches(cfg, r)).collect();
    let dense_bytes = 4 * problem.model.num_params() as u64;
    let per_tensor: Vec<u64> = problem.init.iter().map(|p| 4 * p.len() as u64).collect();
    let mut per_worker: Vec<Vec<StepLog>> = vec![Vec::with_capacity(cfg.run.steps as usize); world];
    for t in 1..=cfg.run.steps {
        opt.set_lr(cfg.optimizer.lr_at(t));
        let params = opt.params().to_vec();
        let mut grads = Vec::with_capacity(world);
        let mut stats = Vec::with_capacity(world);
        for b in batches.iter_mut() {
            let batch = problem.train.batch(b.next_indices());
            let (loss, g) = problem.model.loss_grad(&params, &batch);
            stats.push((loss, grad_norm(&g)));
            grads.push(g);
        }
        let mean = mean_gradients(&grads).map_err(OptimizerError::from)?;
        opt.step(&mean).map_err(OptimizerError::from)?;
        let digest = param_digest(opt.params());
        let eval = is_eval_step(cfg, t).then(|| evaluate(problem, opt.params()));
        let wall_ms = elapsed_ms(start);
        for (r, (loss, gn)) in stats.into_iter().enumerate() {
            per_worker[r].push(StepLog {
                loss,
                grad_norm: gn,
                q_norm: grad_norm(&mean),
                record: CommRecord {
                    step: (t - 1) as u32,
                    rank: r,
                    bytes_sent: dense_bytes,
                    bytes_received: (world as u64 - 1) * dense_bytes,
                    payload_bytes_per_tensor: per_tensor.clone(),
                },
                param_digest: digest,
                eval: if r == 0 { eval } else { None },
                wall_ms,
            });
        }
    }
    Ok(Outcome {
        per_worker,
        ledger: CommLedger::new(),
        frame_digest: 0,
        params: opt.params().to_vec(),
    })
}

fn assemble<T: Element>(
    cfg: &RunConfig,
    problem: &Problem<T>,
    outcome: Outcome<T>,
) -> Result<RunMetrics, HarnessError> {
    let record_wall_clock = cfg.run.record_wall_clock;
    let world = outcome.per_worker.len() as f64;
    let (eval0, acc0) = evaluate(problem, &problem.init);
    let mut rows = vec![MetricsRow {
        step: 0,
        train_loss: problem.model.loss(&problem.init, &problem.train.all()),
        eval_loss: Some(eval0),
        eval_accuracy: acc0,
        wall_clock_ms: record_wall_clock.then_some(0.0),
        ..Default::default()
    }];
    for t in 0..cfg.run.steps as usize {
        let logs: Vec<&StepLog> = outcome.per_worker.iter().map(|w| &w[t]).collect();
        let lead = logs[0];
        if logs.iter().any(|l| l.param_digest != lead.param_digest) {
            return Err(HarnessError::Divergence { step: t as u64 + 1 });
        }
        rows.push(MetricsRow {
            step: t as u64 + 1,
            train_loss: logs.iter().map(|l| l.loss).sum::<f64>() / world,
            grad_norm: Some(logs.iter().map(|l| l.grad_norm).sum::<f64>() / world),
            q_norm: Some(lead.q_norm),
            payload_bytes: lead.record.payload_bytes(),
            bytes_sent: lead.record.bytes_sent,
            bytes_received: lead.record.bytes_received,
            eval_loss: lead.eval.map(|e| e.0),
            eval_accuracy: lead.eval.and_then(|e| e.1),
            wall_clock_ms: record_wall_clock.then_some(lead.wall_ms),
        });
    }
    let (final_eval_loss, final_eval_accuracy) = evaluate(problem, &outcome.params);
    Ok(RunMetrics {
        rows,
        final_train_loss: problem.model.loss(&outcome.params, &problem.train.all()),
        final_eval_loss,
        final_eval_accuracy,
        ledger: outcome.ledger,
        frame_digest: outcome.frame_digest,
        final_params: outcome.params.iter().map(|p| p.to_f64().into_data()).collect(),
        record_wall_clock,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: ModelKind) -> RunConfig {
        let mut c = RunConfig::default();
        c.model.kind = kind;
        c.model.hidden = 16;
        c.model.rows = 4;
        c.model.cols = 4;
        c.data.features = 8;
        c.data.classes = 4;
        c.data.outputs = 4;
        c.data.samples = 256;
        c.data.eval_samples = 64;
        c.data.batch = 16;
        c.optimizer.chunk = 4;
        c.optimizer.k = 2;
        c.run.workers = 3;
        c.run.steps = 12;
        c
    }

    #[test]
    fn zero_steps_gives_only_initial_row() {
        let mut c = small(ModelKind::Logistic);
        c.run.steps = 0;
        let m = run_experiment(&c).unwrap();
        assert_eq!(m.rows.len(), 1);
        assert_eq!(m.rows[0].step, 0);
        assert!(m.rows[0].eval_loss.is_some());
        assert_eq!(m.final_train_loss, m.rows[0].train_loss);
    }

    #[test]
    fn transports_agree() {
        for kind in [ModelKind::Quadratic, ModelKind::Linear, ModelKind::Mlp] {
            let mut c = small(kind);
            let mut outs = Vec::new();
            for t in [TransportKind::Local, TransportKind::Memory, TransportKind::Tcp] {
                c.transport.kind = t;
                outs.push(run_experiment(&c).unwrap());
            }
            for o in &outs[1..] {
                assert_eq!(o.to_csv(), outs[0].to_csv(), "{kind:?}");
                assert_eq!(o.frame_digest, outs[0].frame_digest);
                assert_eq!(o.final_params, outs[0].final_params);
            }
            assert_eq!(outs[1].ledger.records().len(), 12);
        }
    }

    #[test]
    fn rows_carry_ledger_bytes() {
        let c = small(ModelKind::Logistic);
        let m = run_experiment(&c).unwrap();
        assert_eq!(m.rows.len(), 13);
        for (row, rec) in m.rows[1..].iter().zip(m.ledger.records()) {
            assert_eq!(row.bytes_sent, rec.bytes_sent);
            assert_eq!(row.bytes_received, 2 * rec.bytes_sent);
            assert!(row.eval_loss.is_none() || row.step == 12);
        }
        assert!(m.final_eval_accuracy.is_some());
    }

    #[test]
    fn baselines_run_and_learn() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Signum, OptimizerKind::AdamW] {
            let mut c = small(ModelKind::Logistic);
            c.optimizer.kind = kind;
            c.optimizer.lr = 0.05;
            c.run.steps = 40;
            let m = run_experiment(&c).unwrap();
            assert!(m.final_train_loss < m.rows[0].train_loss, "{kind:?}");
            assert_eq!(m.rows[1].bytes_sent, 4 * (8 * 4 + 4));
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut c = small(ModelKind::Linear);
        c.run.workers = 0;
        assert!(matches!(run_experiment(&c), Err(HarnessError::Config(_))));
    }

    #[test]
    fn eval_schedule() {
        let mut c = small(ModelKind::Linear);
        c.run.eval_every = 5;
        let m = run_experiment(&c).unwrap();
        let evals: Vec<u64> = m.rows.iter().filter(|r| r.eval_loss.is_some()).map(|r| r.step).collect();
        assert_eq!(evals, vec![0, 5, 10, 12]);
        assert!(m.rows.iter().all(|r| r.eval_accuracy.is_none()));
    }

    #[test]
    fn wall_clock_column_is_opt_in() {
        let mut c = small(ModelKind::Linear);
        c.run.steps = 3;
        let plain = run_experiment(&c).unwrap();
        assert!(!plain.to_csv().lines().next().unwrap().contains("wall_clock_ms"));
        assert!(plain.rows.iter().all(|r| r.wall_clock_ms.is_none()));
        c.run.record_wall_clock = true;
        let timed = run_experiment(&c).unwrap();
        assert!(timed.to_csv().lines().next().unwrap().ends_with(",wall_clock_ms"));
        let ms: Vec<f64> = timed.rows.iter().map(|r| r.wall_clock_ms.unwrap()).collect();
        assert_eq!(ms[0], 0.0);
        assert!(ms.windows(2).all(|w| w[1] >= w[0]));
    }
}
