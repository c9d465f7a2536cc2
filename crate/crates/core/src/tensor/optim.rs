//! Adam optimizer with bias correction.

use std::collections::BTreeMap;

use super::Parameter;
use crate::error::{CoreError, Result};

/// Per-parameter Adam state plus hyperparameters. One instance drives one
/// training run; moment slots are keyed by parameter name.
pub struct AdamState {
    lr: f32,
    beta1: f32,
    beta2: f32,
    eps: f32,
    t: u64,
    slots: BTreeMap<String, Slot>,
}

struct Slot {
    m: Vec<f32>,
    v: Vec<f32>,
}

impl AdamState {
    /// Defaults beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
    pub fn new(lr: f32) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            slots: BTreeMap::new(),
        }
    }

    pub fn with_betas(mut self, beta1: f32, beta2: f32, eps: f32) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self.eps = eps;
        self
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update over the given parameters. Frozen parameters are skipped;
    /// a missing gradient on a live parameter is an error. Gradients are
    /// consumed (zeroed) by the step.
    pub fn step(&mut self, params: &mut [&mut Parameter]) -> Result<()> {
        self.t += 1;
        let c1 = 1.0 - (self.beta1 as f64).powi(self.t as i32);
        let c2 = 1.0 - (self.beta2 as f64).powi(self.t as i32);
        for p in params.iter_mut() {
            if p.frozen() {
                continue;
            }
            let grad = p
                .value()
                .take_grad()
                .ok_or_else(|| CoreError::MissingGradient(p.name().to_string()))?;
            let n = grad.len();
            let slot = self.slots.entry(p.name().to_string()).or_insert_with(|| Slot {
                m: vec![0.0; n],
                v: vec![0.0; n],
            });
            if slot.m.len() != n {
                return Err(CoreError::shape(
                    "adam_step",
                    format!("parameter '{}' changed size mid-run", p.name()),
                ));
            }
            let mut data = p.value().data().to_vec();
            for i in 0..n {
                let g = grad[i];
                slot.m[i] = self.beta1 * slot.m[i] + (1.0 - self.beta1) * g;
                slot.v[i] = self.beta2 * slot.v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = slot.m[i] as f64 / c1;
                let v_hat = slot.v[i] as f64 / c2;
                data[i] -= (self.lr as f64 * m_hat / (v_hat.sqrt() + self.eps as f64)) as f32;
            }
            p.replace_value(data)?;
        }
        Ok(())
    }
}
