//! First-order optimizers. Both minimise: callers maximising an objective
//! pass the negated gradient.

use serde::{Deserialize, Serialize};

use super::graph::Matrix;
use super::layers::ParamSet;
use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
    /// Plain RMSProp without momentum; the accumulator starts at zero.
    RmsProp { lr: f64, decay: f64, eps: f64 },
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn rmsprop(lr: f64) -> Self {
        OptimizerConfig::RmsProp {
            lr,
            decay: 0.99,
            eps: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    config: OptimizerConfig,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, params: &ParamSet) -> Self {
        let zeros: Vec<Matrix> = params
            .values()
            .iter()
            .map(|p| Matrix::zeros(p.raw_dim()))
            .collect();
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn config(&self) -> OptimizerConfig {
        self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update in place.
    pub fn update(&mut self, params: &mut ParamSet, grads: &[Matrix]) -> Result<()> {
        if grads.len() != params.len() || self.second.len() != params.len() {
            return shape_err(
                "optimizer",
                format!(
                    "{} gradients, {} parameters, {} accumulators",
                    grads.len(),
                    params.len(),
                    self.second.len()
                ),
            );
        }
        for ((name, p), g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return shape_err(
                    "optimizer",
                    format!("`{}`: param {:?}, grad {:?}", name, p.shape(), g.shape()),
                );
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of `{name}`")));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let config = self.config;
        for (k, (p, g)) in params.values_mut().iter_mut().zip(grads).enumerate() {
            match config {
                OptimizerConfig::Adam {
                    lr,
                    beta1,
                    beta2,
                    eps,
                } => {
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    let m = &mut self.first[k];
                    let v = &mut self.second[k];
                    ndarray::Zip::from(p)
                        .and(m)
                        .and(v)
                        .and(g)
                        .for_each(|p, m, v, &g| {
                            *m = beta1 * *m + (1.0 - beta1) * g;
                            *v = beta2 * *v + (1.0 - beta2) * g * g;
                            let m_hat = *m / c1;
                            let v_hat = *v / c2;
                            *p -= lr * m_hat / (v_hat.sqrt() + eps);
                        });
                }
                OptimizerConfig::RmsProp { lr, decay, eps } => {
                    let ms = &mut self.second[k];
                    ndarray::Zip::from(p).and(ms).and(g).for_each(|p, ms, &g| {
                        *ms = decay * *ms + (1.0 - decay) * g * g;
                        *p -= lr * g / (*ms + eps).sqrt();
                    });
                }
            }
        }
        Ok(())
    }
}

pub fn adam_update(params: &mut ParamSet, grads: &[Matrix], state: &mut OptimizerState) -> Result<()> {
    debug_assert!(matches!(state.config, OptimizerConfig::Adam { .. }));
    state.update(params, grads)
}

pub fn rmsprop_update(
    params: &mut ParamSet,
    grads: &[Matrix],
    state: &mut OptimizerState,
) -> Result<()> {
    debug_assert!(matches!(state.config, OptimizerConfig::RmsProp { .. }));
    state.update(params, grads)
}
