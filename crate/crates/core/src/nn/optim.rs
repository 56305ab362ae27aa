use serde::{Deserialize, Serialize};

use super::params::{GradientSet, ModelParams};
use crate::{Error, Result};

/// Hyper-parameters of SGD with classical momentum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr: 0.03,
            momentum: 0.9,
            weight_decay: 1e-5,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("lr", self.lr, "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum", self.momentum, "must lie in [0, 1]"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid(
                "weight_decay",
                self.weight_decay,
                "must be >= 0",
            ));
        }
        Ok(())
    }
}

/// SGD configuration plus zero-initialised velocity buffers.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    config: SgdConfig,
    velocity: GradientSet,
}

impl OptimizerState {
    pub fn new(config: SgdConfig, params: &ModelParams) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            velocity: GradientSet::zeros_like(params),
        })
    }

    pub fn config(&self) -> &SgdConfig {
        &self.config
    }

    pub fn velocity(&self) -> &GradientSet {
        &self.velocity
    }
}

/// One momentum step: `v ← m·v + (g + λ·w)`, `w ← w − η·v`.
///
/// Fails without touching `params` if any gradient entry is non-finite.
pub fn sgd_step(params: &mut ModelParams, grads: &GradientSet, opt: &mut OptimizerState) -> Result<()> {
    grads.check_congruent(params)?;
    opt.velocity.check_congruent(params)?;
    for (id, block) in grads.blocks() {
        if let Some(pos) = block.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                block: format!("gradient of {id} (entry {pos})"),
            });
        }
    }
    let SgdConfig {
        lr,
        momentum,
        weight_decay,
    } = opt.config;
    let grad_blocks = grads.blocks();
    for (((_, w), (_, v)), (_, g)) in params
        .blocks_mut()
        .into_iter()
        .zip(opt.velocity.blocks_mut())
        .zip(grad_blocks)
    {
        for ((w, v), &g) in w.iter_mut().zip(v.iter_mut()).zip(g) {
            *v = momentum * *v + (g + weight_decay * *w);
            *w -= lr * *v;
        }
    }
    Ok(())
}
