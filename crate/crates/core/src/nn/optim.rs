use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

/// First-order minimizer: every step moves parameters against the gradient.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step_count: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive and finite, got {learning_rate}"
            )));
        }
        Ok(Self {
            kind,
            learning_rate,
            m: Vec::new(),
            v: Vec::new(),
            step_count: 0,
        })
    }

    pub fn sgd(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::Adam, learning_rate)
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn set_learning_rate(&mut self, lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        self.learning_rate = lr;
        Ok(())
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update. On a non-finite gradient or result nothing is modified.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check_dim("optimizer step", params.len(), grads.len())?;
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("optimizer gradient"));
        }
        match self.kind {
            OptimizerKind::Sgd => {
                let updated: Vec<f64> = params
                    .iter()
                    .zip(grads)
                    .map(|(p, g)| p - self.learning_rate * g)
                    .collect();
                if updated.iter().any(|p| !p.is_finite()) {
                    return Err(Error::NonFinite("optimizer update"));
                }
                params.copy_from_slice(&updated);
                self.step_count += 1;
            }
            OptimizerKind::Adam => {
                if self.m.len() != params.len() {
                    self.m = vec![0.0; params.len()];
                    self.v = vec![0.0; params.len()];
                }
                let t = (self.step_count + 1) as i32;
                let bias1 = 1.0 - BETA1.powi(t);
                let bias2 = 1.0 - BETA2.powi(t);
                let mut m = self.m.clone();
                let mut v = self.v.clone();
                let mut updated = params.to_vec();
                for i in 0..params.len() {
                    m[i] = BETA1 * m[i] + (1.0 - BETA1) * grads[i];
                    v[i] = BETA2 * v[i] + (1.0 - BETA2) * grads[i] * grads[i];
                    let m_hat = m[i] / bias1;
                    let v_hat = v[i] / bias2;
                    updated[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + EPS);
                }
                if updated.iter().any(|p| !p.is_finite()) {
                    return Err(Error::NonFinite("optimizer update"));
                }
                params.copy_from_slice(&updated);
                self.m = m;
                self.v = v;
                self.step_count += 1;
            }
        }
        Ok(())
    }
}
