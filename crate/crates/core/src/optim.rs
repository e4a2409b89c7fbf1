//! Adam with decoupled weight decay and a stepped learning-rate schedule.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::Param;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled L2 decay, applied only to parameters flagged for it.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!("lr must be > 0, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be in [0, 1), got {b}"
                )));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Slot {
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Optimizer state is keyed by parameter name, so the same instance can step
/// any subset of a model as long as names stay stable.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    slots: BTreeMap<String, Slot>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Adam {
            cfg,
            slots: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    /// Applies one Adam update to every parameter using learning rate `lr`
    /// (the caller supplies the schedule's current value). Missing gradient
    /// buffers are treated as zero.
    pub fn step(&mut self, params: &mut [Param<'_>], lr: f64) -> Result<()> {
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::InvalidArgument(format!("step lr must be > 0, got {lr}")));
        }
        let (b1, b2, eps) = (self.cfg.beta1, self.cfg.beta2, self.cfg.epsilon);
        for p in params {
            let n = p.tensor.data().len();
            let slot = self.slots.entry(p.name.clone()).or_insert_with(|| Slot {
                t: 0,
                m: vec![0.0; n],
                v: vec![0.0; n],
            });
            if slot.m.len() != n {
                return Err(Error::State(format!(
                    "optimizer slot for '{}' has {} entries, parameter has {n}",
                    p.name,
                    slot.m.len()
                )));
            }
            slot.t += 1;
            let bc1 = 1.0 - b1.powi(slot.t as i32);
            let bc2 = 1.0 - b2.powi(slot.t as i32);
            let decay = if p.weight_decay { self.cfg.weight_decay } else { 0.0 };
            // Split borrows: grad buffer is read while data is written.
            let grad = p.tensor.grad().map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; n]);
            for (i, gi) in grad.iter().enumerate() {
                if !gi.is_finite() {
                    return Err(Error::Numerical(format!(
                        "non-finite gradient in parameter '{}' (index {i})",
                        p.name
                    )));
                }
                slot.m[i] = b1 * slot.m[i] + (1.0 - b1) * gi;
                slot.v[i] = b2 * slot.v[i] + (1.0 - b2) * gi * gi;
                let m_hat = slot.m[i] / bc1;
                let v_hat = slot.v[i] / bc2;
                let theta = &mut p.tensor.data_mut()[i];
                *theta -= lr * (m_hat / (v_hat.sqrt() + eps) + decay * *theta);
                if !theta.is_finite() {
                    return Err(Error::Numerical(format!(
                        "non-finite value in parameter '{}' after update (index {i})",
                        p.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Stepped decay: the base rate is multiplied by `factor` once per completed
/// `interval` of epochs. `epoch` is zero-based; `interval == 0` disables
/// decay.
pub fn effective_lr(base_lr: f64, epoch: usize, factor: f64, interval: usize) -> f64 {
    if interval == 0 {
        return base_lr;
    }
    base_lr * factor.powi((epoch / interval) as i32)
}
