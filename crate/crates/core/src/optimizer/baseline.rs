use crate::error::TensorError;
use crate::tensor::{Element, Tensor};

/// Fully synchronized reference optimizers, fed the all-reduced mean gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineKind {
    /// `m <- beta * m + g ; x <- x - lr * m`
    SgdMomentum { beta: f64 },
    /// `m <- beta * m + (1 - beta) * g ; x <- x - lr * sign(m)`
    Signum { beta: f64 },
    /// Bias-corrected Adam with decoupled weight decay.
    AdamW { beta1: f64, beta2: f64, eps: f64 },
}

impl BaselineKind {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::SgdMomentum { .. } => "sgd",
            BaselineKind::Signum { .. } => "signum",
            BaselineKind::AdamW { .. } => "adamw",
        }
    }

    /// Persistent state tensors kept per parameter tensor.
    pub fn state_tensors(&self) -> usize {
        match self {
            BaselineKind::AdamW { .. } => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaselineOptimizer<T> {
    kind: BaselineKind,
    lr: f64,
    weight_decay: f64,
    params: Vec<Tensor<T>>,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
    t: u64,
}

impl<T: Element> BaselineOptimizer<T> {
    pub fn new(kind: BaselineKind, lr: f64, weight_decay: f64, params: Vec<Tensor<T>>) -> Self {
        let first = params.iter().map(Tensor::zeros_like).collect();
        let second = match kind {
            BaselineKind::AdamW { .. } => params.iter().map(Tensor::zeros_like).collect(),
            _ => Vec::new(),
        };
        Self {
            kind,
            lr,
            weight_decay,
            params,
            first,
            second,
            t: 0,
        }
    }

    pub fn kind(&self) -> BaselineKind {
        self.kind
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn state_elements(&self) -> usize {
        self.first.iter().chain(&self.second).map(Tensor::len).sum()
    }

    pub fn step(&mut self, mean_grads: &[Tensor<T>]) -> Result<(), TensorError> {
        if mean_grads.len() != self.params.len() {
            return Err(TensorError::ShapeMismatch {
                expected: vec![self.params.len()],
                found: vec![mean_grads.len()],
            });
        }
        for (p, g) in self.params.iter().zip(mean_grads) {
            p.ensure_same_shape(g)?;
        }
        self.t += 1;
        let lr = self.lr;
        let decay = T::cast(1.0 - lr * self.weight_decay);
        for i in 0..self.params.len() {
            let g = &mean_grads[i];
            let x = &mut self.params[i];
            if self.weight_decay > 0.0 {
                x.scale(decay);
            }
            let m = &mut self.first[i];
            match self.kind {
                BaselineKind::SgdMomentum { beta } => {
                    m.scale(T::cast(beta));
                    m.axpy(T::one(), g)?;
                    x.axpy(T::cast(-lr), m)?;
                }
                BaselineKind::Signum { beta } => {
                    m.scale(T::cast(beta));
                    m.axpy(T::cast(1.0 - beta), g)?;
                    x.axpy(T::cast(-lr), &m.sign())?;
                }
                BaselineKind::AdamW { beta1, beta2, eps } => {
                    let v = &mut self.second[i];
                    let bc1 = 1.0 - beta1.powi(self.t as i32);
                    let bc2 = 1.0 - beta2.powi(self.t as i32);
                    for (((xv, mv), vv), gv) in x
                        .data_mut()
                        .iter_mut()
                        .zip(m.data_mut())
                        .zip(v.data_mut())
                        .zip(g.data())
                    {
                        let gw = gv.widen();
                        let mw = beta1 * mv.widen() + (1.0 - beta1) * gw;
                        let vw = beta2 * vv.widen() + (1.0 - beta2) * gw * gw;
                        *mv = T::cast(mw);
                        *vv = T::cast(vw);
                        let update = (mw / bc1) / ((vw / bc2).sqrt() + eps);
                        *xv = T::cast(xv.widen() - lr * update);
                    }
                }
            }
        }
        Ok(())
    }
}
