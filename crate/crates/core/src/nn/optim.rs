//! Adam and EMA shadow weights.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::nn::{GradTape, VelocityField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(config: AdamConfig, param_count: usize) -> Self {
        AdamState {
            config,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    /// One bias-corrected Adam update. Weights are untouched if any gradient is non-finite.
    pub fn step(&mut self, field: &mut VelocityField, grads: &GradTape) -> Result<()> {
        check_dim(self.m.len(), field.param_count())?;
        check_dim(self.m.len(), grads.grads.len())?;
        if let Some(index) = grads.grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { index });
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.step += 1;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (((w, &g), m), v) in field
            .weights_mut()
            .iter_mut()
            .zip(&grads.grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Exponential moving average of model weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaState {
    pub ratio: f64,
    pub shadow: Vec<f64>,
}

impl EmaState {
    /// Shadow starts at the current weights.
    pub fn new(ratio: f64, field: &VelocityField) -> Result<Self> {
        if !(0.0..1.0).contains(&ratio) {
            return Err(Error::contract(format!("ema ratio {ratio} outside [0, 1)")));
        }
        Ok(EmaState {
            ratio,
            shadow: field.weights().to_vec(),
        })
    }

    pub fn update(&mut self, weights: &[f64]) -> Result<()> {
        check_dim(self.shadow.len(), weights.len())?;
        let r = self.ratio;
        self.shadow
            .iter_mut()
            .zip(weights)
            .for_each(|(s, &w)| *s = r * *s + (1.0 - r) * w);
        Ok(())
    }

    /// A copy of `field` carrying the shadow weights.
    pub fn to_field(&self, field: &VelocityField) -> Result<VelocityField> {
        VelocityField::from_weights(field.spec().clone(), self.shadow.clone())
    }
}
