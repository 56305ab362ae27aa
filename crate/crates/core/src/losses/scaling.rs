use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-class multipliers `α_c ∈ [0, 1]` applied to the logits by restricted softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFactors {
    alphas: Vec<f64>,
}

/// How a client derives its scaling factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalingMode {
    /// `α_c = 1` for observed classes, `alpha` for missing ones.
    Binary,
    /// `α_c = m_c / Σ_j m_j` from local class counts.
    Frequency,
}

impl ScalingFactors {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::invalid("alpha", a, "scaling factors must lie in [0, 1]"));
        }
        Ok(Self { alphas })
    }

    pub fn ones(classes: usize) -> Self {
        Self {
            alphas: vec![1.0; classes],
        }
    }

    pub fn binary(alpha: f64, observed: &[usize], classes: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid("alpha", alpha, "must lie in [0, 1]"));
        }
        if observed.is_empty() {
            return Err(Error::Empty("observed class set".into()));
        }
        let mut alphas = vec![alpha; classes];
        for &c in observed {
            if c >= classes {
                return Err(Error::LabelOutOfRange { label: c, classes });
            }
            alphas[c] = 1.0;
        }
        Ok(Self { alphas })
    }

    pub fn frequency(counts: &[usize]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::Empty("class counts sum to zero".into()));
        }
        let total = total as f64;
        Ok(Self {
            alphas: counts.iter().map(|&m| m as f64 / total).collect(),
        })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }
}

/// Builds scaling factors for a client.
///
/// `observed` is the client's observed class set and `counts` its per-class
/// sample counts (length = class count); binary mode reads the former,
/// frequency mode the latter.
pub fn build_scaling(
    mode: ScalingMode,
    alpha: f64,
    observed: &[usize],
    counts: &[usize],
) -> Result<ScalingFactors> {
    match mode {
        ScalingMode::Binary => ScalingFactors::binary(alpha, observed, counts.len()),
        ScalingMode::Frequency => ScalingFactors::frequency(counts),
    }
}
