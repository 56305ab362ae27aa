//! Scalar objectives and their gradients with respect to logits and features.
//!
//! All batch reductions are means. The composite objectives the network can be
//! trained under are enumerated by [`LossSpec`]; `nn::backward` turns them into
//! parameter gradients.

mod kd;
mod mmd;
mod scaling;
mod softmax;

use serde::{Deserialize, Serialize};

pub use kd::kd_loss;
pub(crate) use kd::kd_loss_with_grad;
pub use mmd::{mmd_loss, Bandwidth, MmdConfig};
pub(crate) use mmd::mmd_loss_with_grad;
pub use scaling::{build_scaling, ScalingFactors, ScalingMode};
pub(crate) use softmax::cross_entropy_with_grad;
pub use softmax::{
    cross_entropy, force_decomposition, restricted_softmax_probs, scale_logits, softmax_probs,
    PROB_FLOOR,
};

use crate::nn::ModelParams;
use crate::{Error, Result};

/// Default distillation temperature.
pub const DEFAULT_TAU: f64 = 4.0;

/// Which knowledge-transfer term joins the cross-entropy during personalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransferKind {
    Kd,
    Mmd,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdConfig {
    pub tau: f64,
    pub lambda: f64,
    pub transfer: TransferKind,
}

impl Default for KdConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            lambda: 0.01,
            transfer: TransferKind::Kd,
        }
    }
}

impl KdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid("tau", self.tau, "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid("lambda", self.lambda, "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Knowledge-transfer term against a frozen teacher (the client's private model).
#[derive(Debug, Clone, Copy)]
pub enum Transfer<'a> {
    None,
    /// KL between temperature-softened teacher and student logits.
    Kd { teacher: &'a ModelParams, tau: f64 },
    /// MMD between student and teacher extractor features.
    Mmd {
        teacher: &'a ModelParams,
        cfg: &'a MmdConfig,
    },
}

/// The closed set of objectives a model can be trained under.
#[derive(Debug, Clone, Copy)]
pub enum LossSpec<'a> {
    /// Cross-entropy over standard softmax.
    SoftmaxCe,
    /// Cross-entropy over restricted softmax with the given scales.
    RestrictedCe(&'a ScalingFactors),
    /// `(1 − λ)·CE + λ·transfer`, CE over standard softmax.
    Personalization { lambda: f64, transfer: Transfer<'a> },
}

/// `(1 − λ)·ce + λ·transfer`.
pub fn total_personalization_loss(ce: f64, transfer: f64, lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid("lambda", lambda, "must lie in [0, 1]"));
    }
    Ok((1.0 - lambda) * ce + lambda * transfer)
}
