//! Small models with hand-written gradients.
//!
//! Math runs in 64-bit regardless of the parameter element type; parameters
//! are widened on the way in and gradients narrowed on the way out.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Self::Tanh),
            "relu" => Some(Self::Relu),
            _ => None,
        }
    }

    fn apply(self, z: f64) -> f64 {
        match self {
            Self::Tanh => z.tanh(),
            Self::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Self::Tanh => 1.0 - a * a,
            Self::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Softmax cross-entropy over class labels.
    Softmax,
    /// Half squared error, summed over outputs, averaged over samples.
    Mse,
}

/// Labels or regression targets for a set of samples.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    Values { dim: usize, values: Vec<f64> },
    None,
}

/// A contiguous batch of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub dim: usize,
    pub x: Vec<f64>,
    pub targets: Targets,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.x.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Fully connected network; with no hidden layers it is linear or
/// multinomial logistic regression depending on the head.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    /// Layer widths from input to output.
    pub sizes: Vec<usize>,
    pub activation: Activation,
    pub bias: bool,
    pub head: Head,
}

/// `loss(x) = 1/2 x^T A x - mean(b_i)^T x` with the samples providing `b_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticBowl {
    pub shape: Vec<usize>,
    /// Row-major symmetric positive definite matrix.
    pub a: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Quadratic(QuadraticBowl),
    Dense(DenseNet),
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

impl QuadraticBowl {
    /// Random bowl with eigenvalues roughly in `[0.5, 2.5]`.
    pub fn random(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Self {
        let n: usize = shape.iter().product();
        let g: Vec<f64> = (0..n * n).map(|_| normal(rng)).collect();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = (0..n).map(|r| g[r * n + i] * g[r * n + j]).sum();
                a[i * n + j] = 0.5 * dot / n as f64 + if i == j { 0.5 } else { 0.0 };
            }
        }
        Self { shape, a }
    }

    pub fn identity(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 1.0;
        }
        Self { shape, a }
    }

    pub fn dim(&self) -> usize {
        self.shape.iter().product()
    }

    fn ax(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| self.a[i * n..(i + 1) * n].iter().zip(x).map(|(p, q)| p * q).sum())
            .collect()
    }

    fn mean_b(&self, batch: &Batch) -> Vec<f64> {
        let n = self.dim();
        let mut b = vec![0.0; n];
        for row in batch.x.chunks(n) {
            for (acc, v) in b.iter_mut().zip(row) {
                *acc += v;
            }
        }
        let count = batch.len().max(1) as f64;
        b.iter_mut().for_each(|v| *v /= count);
        b
    }

    fn loss_grad(&self, x: &[f64], batch: &Batch) -> (f64, Vec<f64>) {
        let ax = self.ax(x);
        let b = self.mean_b(batch);
        let loss = 0.5 * x.iter().zip(&ax).map(|(p, q)| p * q).sum::<f64>()
            - x.iter().zip(&b).map(|(p, q)| p * q).sum::<f64>();
        let grad = ax.iter().zip(&b).map(|(p, q)| p - q).collect();
        (loss, grad)
    }
}

struct Forward {
    /// Activations per layer, `acts[0]` is the input.
    acts: Vec<Vec<f64>>,
    /// Pre-activations per layer (index `l` feeds `acts[l + 1]`).
    pre: Vec<Vec<f64>>,
}

impl DenseNet {
    pub fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = Vec::new();
        for l in 0..self.layers() {
            shapes.push(vec![self.sizes[l + 1], self.sizes[l]]);
            if self.bias {
                shapes.push(vec![self.sizes[l + 1]]);
            }
        }
        shapes
    }

    fn weights<'a>(&self, params: &'a [Vec<f64>], l: usize) -> (&'a [f64], Option<&'a [f64]>) {
        if self.bias {
            (&params[2 * l], Some(&params[2 * l + 1]))
        } else {
            (&params[l], None)
        }
    }

    fn forward(&self, params: &[Vec<f64>], x: &[f64], n: usize) -> Forward {
        let mut acts = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(self.layers());
        for l in 0..self.layers() {
            let (din, dout) = (self.sizes[l], self.sizes[l + 1]);
            let (w, b) = self.weights(params, l);
            let input = &acts[l];
            let mut z = vec![0.0; n * dout];
            for s in 0..n {
                let xi = &input[s * din..(s + 1) * din];
                for o in 0..dout {
                    let row = &w[o * din..(o + 1) * din];
                    let mut acc: f64 = row.iter().zip(xi).map(|(p, q)| p * q).sum();
                    if let Some(b) = b {
                        acc += b[o];
                    }
                    z[s * dout + o] = acc;
                }
            }
            let a = if l + 1 < self.layers() {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            } else {
                z.clone()
            };
            pre.push(z);
            acts.push(a);
        }
        Forward { acts, pre }
    }

    /// Loss and gradient of the output with respect to the logits.
    fn head_loss(&self, out: &[f64], batch: &Batch, n: usize, want_grad: bool) -> (f64, Vec<f64>) {
        let dout = *self.sizes.last().expect("network has an output layer");
        let mut grad = if want_grad { vec![0.0; out.len()] } else { Vec::new() };
        let mut loss = 0.0;
        match (&self.head, &batch.targets) {
            (Head::Softmax, Targets::Classes(labels)) => {
                for s in 0..n {
                    let z = &out[s * dout..(s + 1) * dout];
                    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
                    let log_norm = max + sum.ln();
                    loss += log_norm - z[labels[s]];
                    if want_grad {
                        for o in 0..dout {
                            let p = (z[o] - log_norm).exp();
                            grad[s * dout + o] = (p - if o == labels[s] { 1.0 } else { 0.0 }) / n as f64;
                        }
                    }
                }
            }
            (Head::Mse, Targets::Values { values, .. }) => {
                for (i, (z, y)) in out.iter().zip(values).enumerate() {
                    let d = z - y;
                    loss += 0.5 * d * d;
                    if want_grad {
                        grad[i] = d / n as f64;
                    }
                }
            }
            _ => panic!("targets do not match the model head"),
        }
        (loss / n as f64, grad)
    }

    fn loss_grad(&self, params: &[Vec<f64>], batch: &Batch) -> (f64, Vec<Vec<f64>>) {
        let n = batch.len();
        let fwd = self.forward(params, &batch.x, n);
        let (loss, mut dz) = self.head_loss(fwd.acts.last().unwrap(), batch, n, true);
        let mut grads: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.len()]).collect();
        for l in (0..self.layers()).rev() {
            let (din, dout) = (self.sizes[l], self.sizes[l + 1]);
            let input = &fwd.acts[l];
            let (wi, bi) = if self.bias { (2 * l, Some(2 * l + 1)) } else { (l, None) };
            {
                let gw = &mut grads[wi];
                for s in 0..n {
                    let xi = &input[s * din..(s + 1) * din];
                    for o in 0..dout {
                        let d = dz[s * dout + o];
                        if d != 0.0 {
                            for (g, v) in gw[o * din..(o + 1) * din].iter_mut().zip(xi) {
                                *g += d * v;
                            }
                        }
                    }
                }
            }
            if let Some(bi) = bi {
                let gb = &mut grads[bi];
                for s in 0..n {
                    for o in 0..dout {
                        gb[o] += dz[s * dout + o];
                    }
                }
            }
            if l > 0 {
                let (w, _) = self.weights(params, l);
                let z_prev = &fwd.pre[l - 1];
                let a_prev = &fwd.acts[l];
                let mut next = vec![0.0; n * din];
                for s in 0..n {
                    for o in 0..dout {
                        let d = dz[s * dout + o];
                        if d != 0.0 {
                            for (acc, wv) in next[s * din..(s + 1) * din].iter_mut().zip(&w[o * din..(o + 1) * din]) {
                                *acc += d * wv;
                            }
                        }
                    }
                }
                for (i, v) in next.iter_mut().enumerate() {
                    *v *= self.activation.derivative(z_prev[i], a_prev[i]);
                }
                dz = next;
            }
        }
        (loss, grads)
    }

    fn loss(&self, params: &[Vec<f64>], batch: &Batch) -> f64 {
        let n = batch.len();
        let fwd = self.forward(params, &batch.x, n);
        self.head_loss(fwd.acts.last().unwrap(), batch, n, false).0
    }

    fn accuracy(&self, params: &[Vec<f64>], batch: &Batch) -> Option<f64> {
        let Targets::Classes(labels) = &batch.targets else {
            return None;
        };
        if self.head != Head::Softmax {
            return None;
        }
        let n = batch.len();
        let fwd = self.forward(params, &batch.x, n);
        let out = fwd.acts.last().unwrap();
        let dout = *self.sizes.last().unwrap();
        let correct = (0..n)
            .filter(|&s| {
                let z = &out[s * dout..(s + 1) * dout];
                let best = (0..dout).fold(0, |b, o| if z[o] > z[b] { o } else { b });
                best == labels[s]
            })
            .count();
        Some(correct as f64 / n.max(1) as f64)
    }
}

fn widen<T: Element>(params: &[Tensor<T>]) -> Vec<Vec<f64>> {
    params.iter().map(|p| p.data().iter().map(|v| v.widen()).collect()).collect()
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::Quadratic(_) => "quadratic",
            Model::Dense(net) => match (net.head, net.layers()) {
                (Head::Mse, 1) => "linear",
                (Head::Softmax, 1) => "logistic",
                _ => "mlp",
            },
        }
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match self {
            Model::Quadratic(q) => vec![q.shape.clone()],
            Model::Dense(net) => net.param_shapes(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.param_shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }

    /// Input width a batch must have.
    pub fn input_dim(&self) -> usize {
        match self {
            Model::Quadratic(q) => q.dim(),
            Model::Dense(net) => net.sizes[0],
        }
    }

    /// Weights scaled by `1/sqrt(fan_in)`, zero biases; the bowl starts at a
    /// standard normal point.
    pub fn init_params<T: Element>(&self, rng: &mut ChaCha8Rng) -> Vec<Tensor<T>> {
        self.param_shapes()
            .into_iter()
            .map(|shape| {
                let scale = match (self, shape.len()) {
                    (Model::Quadratic(_), _) => 1.0,
                    (Model::Dense(_), 2) => 1.0 / (shape[1] as f64).sqrt(),
                    _ => 0.0,
                };
                Tensor::from_fn(shape, |_| {
                    if scale == 0.0 {
                        T::zero()
                    } else {
                        T::cast(scale * normal(rng))
                    }
                })
                .expect("model shapes are valid")
            })
            .collect()
    }

    pub fn loss_grad<T: Element>(&self, params: &[Tensor<T>], batch: &Batch) -> (f64, Vec<Tensor<T>>) {
        let (loss, grads) = self.loss_grad_f64(&widen(params), batch);
        let grads = grads
            .into_iter()
            .zip(params)
            .map(|(g, p)| Tensor::new(p.shape().to_vec(), g.into_iter().map(T::cast).collect()).expect("gradient shape"))
            .collect();
        (loss, grads)
    }

    pub fn loss_grad_f64(&self, params: &[Vec<f64>], batch: &Batch) -> (f64, Vec<Vec<f64>>) {
        match self {
            Model::Quadratic(q) => {
                let (l, g) = q.loss_grad(&params[0], batch);
                (l, vec![g])
            }
            Model::Dense(net) => net.loss_grad(params, batch),
        }
    }

    pub fn loss<T: Element>(&self, params: &[Tensor<T>], batch: &Batch) -> f64 {
        self.loss_f64(&widen(params), batch)
    }

    pub fn loss_f64(&self, params: &[Vec<f64>], batch: &Batch) -> f64 {
        match self {
            Model::Quadratic(q) => q.loss_grad(&params[0], batch).0,
            Model::Dense(net) => net.loss(params, batch),
        }
    }

    pub fn accuracy<T: Element>(&self, params: &[Tensor<T>], batch: &Batch) -> Option<f64> {
        match self {
            Model::Quadratic(_) => None,
            Model::Dense(net) => net.accuracy(&widen(params), batch),
        }
    }
}

/// Worst relative error between the analytic gradient and central
/// differences (step `1e-4`) over `probes` random coordinates.
pub fn finite_difference_check(model: &Model, params: &[Tensor<f64>], batch: &Batch, probes: usize, rng: &mut ChaCha8Rng) -> f64 {
    const H: f64 = 1e-4;
    let mut p = widen(params);
    let (_, grads) = model.loss_grad_f64(&p, batch);
    let mut worst: f64 = 0.0;
    for _ in 0..probes.max(1) {
        let t = rng.random_range(0..p.len());
        let i = rng.random_range(0..p[t].len());
        let orig = p[t][i];
        p[t][i] = orig + H;
        let up = model.loss_f64(&p, batch);
        p[t][i] = orig - H;
        let down = model.loss_f64(&p, batch);
        p[t][i] = orig;
        let fd = (up - down) / (2.0 * H);
        let an = grads[t][i];
        let denom = fd.abs().max(an.abs()).max(1e-6);
        worst = worst.max((fd - an).abs() / denom);
    }
    worst
}
