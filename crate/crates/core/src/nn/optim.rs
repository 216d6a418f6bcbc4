use crate::error::{Error, Result};
use crate::nn::tensor::{ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub const fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Update rule plus optional global-norm gradient clipping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub clip_norm: Option<f64>,
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer {
            kind: OptimizerKind::adam(),
            clip_norm: Some(5.0),
        }
    }
}

impl Optimizer {
    pub fn sgd() -> Self {
        Optimizer {
            kind: OptimizerKind::Sgd,
            clip_norm: None,
        }
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    /// A non-finite gradient aborts the step and leaves the parameters untouched.
    pub fn step(&self, store: &mut ParamStore, lr: f64) -> Result<()> {
        let norm = store.grads().l2_norm();
        if !norm.is_finite() {
            store.zero_grad();
            return Err(Error::NonFinite("gradient"));
        }
        let scale = match self.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        let (values, grads, moments) = store.params_and_grads_mut();
        match self.kind {
            OptimizerKind::Sgd => {
                for (i, p) in values.iter_mut().enumerate() {
                    let g = grads.get(crate::nn::ParamId(i)).data();
                    for (w, &gv) in p.data_mut().iter_mut().zip(g) {
                        *w -= lr * scale * gv;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if moments.first.len() != values.len() {
                    moments.first = values.iter().map(|v| Tensor::zeros(v.shape())).collect();
                    moments.second = moments.first.clone();
                    moments.step = 0;
                }
                moments.step += 1;
                let t = moments.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (i, p) in values.iter_mut().enumerate() {
                    let g = grads.get(crate::nn::ParamId(i)).data();
                    let m = moments.first[i].data_mut();
                    let v = moments.second[i].data_mut();
                    for (k, w) in p.data_mut().iter_mut().enumerate() {
                        let gv = g[k] * scale;
                        m[k] = beta1 * m[k] + (1.0 - beta1) * gv;
                        v[k] = beta2 * v[k] + (1.0 - beta2) * gv * gv;
                        *w -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
                    }
                }
            }
        }
        store.zero_grad();
        Ok(())
    }
}
