//! Adam optimizer with bias correction and decoupled weight decay.

use std::collections::BTreeMap;

use super::tensor::Tensor;
use crate::error::{GhanError, Result};

/// Optimizer hyperparameters. Defaults match the training recipe used
/// throughout this crate: learning rate 5e-4 and weight decay 5e-5 with
/// the standard moment coefficients.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled weight decay: applied as an additive `lr * wd * theta`
    /// shrinkage term, not folded into the gradient.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 5e-5,
        }
    }
}

/// Per-parameter first/second moment tensors plus the shared step counter.
///
/// Moments are keyed by parameter name and created lazily with the shape of
/// the parameter they track. The counter increases by exactly 1 per call to
/// [`AdamState::step`].
pub struct AdamState {
    config: AdamConfig,
    step: u64,
    moments: BTreeMap<String, (Tensor, Tensor)>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one optimizer update across a full parameter set.
    ///
    /// Each item is `(name, parameter, gradient)`; the gradient must have
    /// the parameter's shape.
    pub fn step<'a, I>(&mut self, params_and_grads: I) -> Result<()>
    where
        I: IntoIterator<Item = (String, &'a mut Tensor, &'a Tensor)>,
    {
        self.step += 1;
        let t = self.step as i32;
        let c = self.config;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);

        for (name, param, grad) in params_and_grads {
            if !param.same_shape(grad) {
                return Err(GhanError::ShapeMismatch {
                    op: format!("adam_step `{name}`"),
                    lhs: param.shape().to_vec(),
                    rhs: grad.shape().to_vec(),
                });
            }
            let (m, v) = self
                .moments
                .entry(name)
                .or_insert_with(|| (Tensor::zeros_like(param), Tensor::zeros_like(param)));
            let pd = param.data_mut();
            let md = m.data_mut();
            let vd = v.data_mut();
            for i in 0..pd.len() {
                let g = grad.data()[i];
                md[i] = c.beta1 * md[i] + (1.0 - c.beta1) * g;
                vd[i] = c.beta2 * vd[i] + (1.0 - c.beta2) * g * g;
                let m_hat = md[i] / bias1;
                let v_hat = vd[i] / bias2;
                pd[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon)
                    + c.learning_rate * c.weight_decay * pd[i];
            }
        }
        Ok(())
    }
}
