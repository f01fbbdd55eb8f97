//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::net::NetParams;

use super::loss::Gradients;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self::new(0.002)
    }
}

/// First and second moment accumulators, one flat buffer per tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    /// Fresh state for tensors of the given lengths.
    pub fn new(config: AdamConfig, lens: &[usize]) -> Self {
        Self {
            config,
            first: lens.iter().map(|&l| vec![0.0; l]).collect(),
            second: lens.iter().map(|&l| vec![0.0; l]).collect(),
            t: 0,
        }
    }

    pub fn for_params(config: AdamConfig, p: &NetParams) -> Self {
        let lens: Vec<usize> = p.tensors().iter().map(|(_, t)| t.len()).collect();
        Self::new(config, &lens)
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn second_moments(&self) -> impl Iterator<Item = f64> + '_ {
        self.second.iter().flatten().copied()
    }

    /// One update over matching lists of parameter and gradient tensors.
    pub fn step_tensors(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::DimensionMismatch {
                what: "tensor count",
                expected: self.first.len(),
                actual: params.len().min(grads.len()),
            });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::DimensionMismatch {
                    what: "tensor length",
                    expected: m.len(),
                    actual: if p.len() != m.len() { p.len() } else { g.len() },
                });
            }
        }

        self.t += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.t as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }

    pub fn step(&mut self, p: &mut NetParams, g: &Gradients) -> Result<()> {
        let mut params = p.tensors_mut();
        self.step_tensors(&mut params, &g.tensors())
    }
}
