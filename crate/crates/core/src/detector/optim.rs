use serde::{Deserialize, Serialize};

use super::network::{MlpGrads, MlpParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// One AdamW update of a single tensor at step `t` (1-based).
///
/// Weight decay is decoupled: the parameter shrinks by `lr·wd` before the
/// bias-corrected Adam step is applied.
#[allow(clippy::too_many_arguments)]
pub fn adamw_update(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    hyper: &AdamHyper,
    decay: bool,
) {
    let bc1 = 1.0 - hyper.beta1.powi(t as i32);
    let bc2 = 1.0 - hyper.beta2.powi(t as i32);
    let shrink = if decay { 1.0 - lr * hyper.weight_decay } else { 1.0 };
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
        v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] = param[i] * shrink - lr * m_hat / (v_hat.sqrt() + hyper.eps);
    }
}

/// AdamW moment buffers for every trainable tensor of one network.
#[derive(Debug, Clone)]
pub struct AdamW {
    hyper: AdamHyper,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(params: &MlpParams, hyper: AdamHyper) -> Self {
        let sizes: Vec<usize> = params.trainable().iter().map(|t| t.data.len()).collect();
        AdamW {
            hyper,
            step: params.step,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Applies one update and advances the step counter of both the
    /// optimizer and `params`. Nothing is modified when an error is returned.
    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpGrads, lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Argument(format!("learning rate {lr} must be positive")));
        }
        if self.step != params.step {
            return Err(Error::State(format!(
                "optimizer at step {} but parameters at step {}",
                self.step, params.step
            )));
        }
        let grad_tensors = grads.tensors();
        if grad_tensors.len() != self.first.len() {
            return Err(Error::State("gradient layout does not match parameters".into()));
        }
        for g in &grad_tensors {
            if let Some(i) = g.data.iter().position(|v| !v.is_finite()) {
                return Err(Error::Training(format!(
                    "non-finite gradient in {} at index {i}",
                    g.name
                )));
            }
        }
        let t = self.step + 1;
        for (k, (p, g)) in params.trainable_mut().into_iter().zip(&grad_tensors).enumerate() {
            if p.data.len() != g.data.len() {
                return Err(Error::State(format!("gradient shape mismatch for {}", p.name)));
            }
            adamw_update(
                p.data,
                g.data,
                &mut self.first[k],
                &mut self.second[k],
                t,
                lr,
                &self.hyper,
                p.decay,
            );
        }
        self.step = t;
        params.step = t;
        Ok(())
    }
}
