use serde::{Deserialize, Serialize};

use super::{Element, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Adam with bias correction. Moments are created lazily on the first step
/// and must keep matching the store's parameter shapes afterwards.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    #[serde(skip)]
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam::with_betas(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        assert!(lr > 0.0, "learning rate must be positive");
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            moments: Vec::new(),
        }
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step<T: Element>(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        if self.moments.is_empty() {
            self.moments = store
                .iter()
                .map(|p| (vec![0.0; p.value.numel()], vec![0.0; p.value.numel()]))
                .collect();
        }
        if self.moments.len() != store.len() {
            return Err(Error::InvalidArgument(format!(
                "optimizer state has {} slots, store has {} parameters",
                self.moments.len(),
                store.len()
            )));
        }
        for ((m, _), p) in self.moments.iter().zip(store.iter()) {
            if m.len() != p.value.numel() || p.grad.shape() != p.value.shape() {
                return Err(Error::Dimension {
                    op: "adam_step",
                    lhs: p.value.shape().to_vec(),
                    rhs: vec![m.len()],
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((m, v), p) in self.moments.iter_mut().zip(store.iter_mut()) {
            let grads = p.grad.data().to_vec();
            for (((w, g), mi), vi) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(grads)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                let g = g.as_f64();
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let update = self.lr * (*mi / bc1) / ((*vi / bc2).sqrt() + self.eps);
                *w = T::from_f64(w.as_f64() - update);
            }
            p.grad = Tensor::zeros(p.value.shape().to_vec());
        }
        Ok(())
    }
}
