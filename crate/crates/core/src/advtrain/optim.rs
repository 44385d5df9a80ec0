use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::encoder::ModelParams;
use crate::tensor::Tensor;

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Default for Adam {
    fn default() -> Self {
        Self::new()
    }
}

impl Adam {
    pub fn new() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    fn update(&mut self, slot: usize, param: &mut Tensor, grad: &Tensor, lr: f64) {
        if self.first.len() <= slot {
            self.first.resize(slot + 1, Vec::new());
            self.second.resize(slot + 1, Vec::new());
        }
        let m = &mut self.first[slot];
        let v = &mut self.second[slot];
        if m.is_empty() {
            *m = vec![0.0; param.len()];
            *v = vec![0.0; param.len()];
        }
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, &g), m), v) in param.data_mut().iter_mut().zip(grad.data()).zip(m).zip(v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }

    fn check(params: &Tensor, grad: &Tensor, name: &str) -> Result<(), TrainError> {
        if params.shape() != grad.shape() {
            return Err(TrainError::Config(format!(
                "gradient for {name} has shape {:?}, parameter {:?}",
                grad.shape(),
                params.shape()
            )));
        }
        if let Some(&bad) = grad.data().iter().find(|g| !g.is_finite()) {
            return Err(TrainError::NonFinite {
                term: "gradient",
                value: bad,
            });
        }
        Ok(())
    }

    /// One update over a flat list of tensors. Nothing is modified when any
    /// gradient is non-finite.
    pub fn step_tensors(
        &mut self,
        params: &mut [Tensor],
        grads: &[Tensor],
        lr: f64,
    ) -> Result<(), TrainError> {
        if params.len() != grads.len() {
            return Err(TrainError::Config("parameter/gradient count mismatch".into()));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            Self::check(p, g, &format!("tensor {i}"))?;
        }
        self.step += 1;
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            self.update(i, p, g, lr);
        }
        Ok(())
    }

    /// One update over every model array, in [`ModelParams::named`] order.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) -> Result<(), TrainError> {
        for ((name, p), (_, g)) in params.named().into_iter().zip(grads.named()) {
            Self::check(p, g, &name)?;
        }
        self.step += 1;
        let mut slot = 0;
        params.zip_mut(grads, &mut |_, p, g| {
            self.update(slot, p, g, lr);
            slot += 1;
        });
        Ok(())
    }
}
