//! Parameter-server simulation: client sampling, aggregation, the per-strategy
//! client procedures and the round loop.

mod client;
mod server;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use client::{
    client_procedure, client_procedure_fedavg, client_procedure_fedphp, client_procedure_fedrs,
    client_procedure_map, stage_epochs, ClientContext, ClientOutcome, ClientState,
};
pub use server::{run_federation, setup, RunLog, ServerState};

use crate::losses::{MmdConfig, ScalingMode, TransferKind, DEFAULT_TAU};
use crate::nn::{ModelParams, SgdConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    FedAvg,
    FedRs,
    FedPhp,
    Map,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::FedAvg => "fedavg",
            StrategyKind::FedRs => "fedrs",
            StrategyKind::FedPhp => "fedphp",
            StrategyKind::Map => "map",
        }
    }

    pub fn keeps_private_model(self) -> bool {
        matches!(self, StrategyKind::FedPhp | StrategyKind::Map)
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fedavg" => Ok(StrategyKind::FedAvg),
            "fedrs" => Ok(StrategyKind::FedRs),
            "fedphp" => Ok(StrategyKind::FedPhp),
            "map" => Ok(StrategyKind::Map),
            other => Err(Error::invalid(
                "strategy",
                other,
                "expected one of fedavg, fedrs, fedphp, map",
            )),
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Strategy and its hyper-parameters. Fields a strategy does not use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Restricted-softmax factor for missing classes.
    pub alpha: f64,
    pub scaling: ScalingMode,
    /// Weight of the transfer term in the personalization loss.
    pub lambda: f64,
    pub transfer: TransferKind,
    /// Macro momentum of the private-model moving average.
    pub mu: f64,
    pub tau: f64,
    pub mmd: MmdConfig,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            kind: StrategyKind::Map,
            alpha: 0.9,
            scaling: ScalingMode::Binary,
            lambda: 0.01,
            transfer: TransferKind::Kd,
            mu: 0.9,
            tau: DEFAULT_TAU,
            mmd: MmdConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    /// Number of global rounds `T`.
    pub rounds: usize,
    /// Client selection ratio `Q`.
    pub sample_ratio: f64,
    /// Local epochs `E` per selection.
    pub local_epochs: usize,
    pub batch_size: usize,
    pub sgd: SgdConfig,
    pub strategy: StrategyConfig,
    /// Weight uploads by local train size instead of uniformly.
    pub weighted_aggregation: bool,
    /// Record proxy norms, gradient norms and pairwise distances every round.
    pub diagnostics: bool,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            rounds: 30,
            sample_ratio: 0.2,
            local_epochs: 10,
            batch_size: 64,
            sgd: SgdConfig::default(),
            strategy: StrategyConfig::default(),
            weighted_aggregation: false,
            diagnostics: true,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::invalid("rounds", self.rounds, "must be >= 1"));
        }
        if !(self.sample_ratio > 0.0 && self.sample_ratio <= 1.0) {
            return Err(Error::invalid("sample_ratio", self.sample_ratio, "must lie in (0, 1]"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", self.batch_size, "must be >= 1"));
        }
        if self.strategy.kind == StrategyKind::Map && self.local_epochs < 2 {
            return Err(Error::invalid(
                "local_epochs",
                self.local_epochs,
                "MAP needs at least 2 epochs for its two stages",
            ));
        }
        self.sgd.validate()?;
        let s = &self.strategy;
        if !(0.0..=1.0).contains(&s.alpha) {
            return Err(Error::invalid("alpha", s.alpha, "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&s.lambda) {
            return Err(Error::invalid("lambda", s.lambda, "must lie in [0, 1]"));
        }
        if !(s.mu >= 0.0 && s.mu.is_finite()) {
            return Err(Error::invalid("mu", s.mu, "must be >= 0"));
        }
        if !(s.tau > 0.0 && s.tau.is_finite()) {
            return Err(Error::invalid("tau", s.tau, "must be > 0"));
        }
        s.mmd.validate()
    }
}

/// Number of clients drawn per round: `max(round(Q·K), 1)`, at most `K`.
pub fn clients_per_round(clients: usize, ratio: f64) -> usize {
    ((ratio * clients as f64).round() as usize).clamp(1, clients.max(1))
}

/// Uniformly samples `max(round(Q·K), 1)` distinct clients, returned ascending.
pub fn sample_clients<R: Rng + ?Sized>(clients: usize, ratio: f64, rng: &mut R) -> Result<Vec<usize>> {
    if clients == 0 {
        return Err(Error::invalid("clients", clients, "must be >= 1"));
    }
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::invalid("sample_ratio", ratio, "must lie in (0, 1]"));
    }
    let n = clients_per_round(clients, ratio);
    let mut picked = index::sample(rng, clients, n).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Per-client momentum `clamp(μ · z / (Q · T), 0, 1)`.
pub fn mu_schedule(mu: f64, selections: usize, ratio: f64, rounds: usize) -> f64 {
    (mu * selections as f64 / (ratio * rounds as f64)).clamp(0.0, 1.0)
}

/// Element-wise unweighted mean of the uploads, in the given order.
pub fn aggregate(uploads: &[ModelParams]) -> Result<ModelParams> {
    let weights = vec![1.0; uploads.len()];
    aggregate_weighted(uploads, &weights)
}

/// Element-wise weighted mean `Σ w_k ψ_k / Σ w_k`.
///
/// Each output entry is clamped to the min/max of its inputs, so identical
/// uploads aggregate to exactly that upload.
pub fn aggregate_weighted(uploads: &[ModelParams], weights: &[f64]) -> Result<ModelParams> {
    let first = uploads
        .first()
        .ok_or_else(|| Error::Empty("no uploads to aggregate".into()))?;
    if weights.len() != uploads.len() {
        return Err(Error::dim("aggregation weights", uploads.len(), weights.len()));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
        return Err(Error::invalid("aggregation weight", w, "must be finite and >= 0"));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("aggregation weight", total, "weights sum to zero"));
    }
    for u in &uploads[1..] {
        first.check_congruent(u)?;
    }
    let mut out = first.clone();
    let sources: Vec<Vec<(_, &[f64])>> = uploads.iter().map(|u| u.blocks()).collect();
    for (b, (_, dst)) in out.blocks_mut().into_iter().enumerate() {
        for (j, v) in dst.iter_mut().enumerate() {
            let mut sum = 0.0;
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for (src, w) in sources.iter().zip(weights) {
                let x = src[b].1[j];
                sum += w * x;
                lo = lo.min(x);
                hi = hi.max(x);
            }
            *v = (sum / total).clamp(lo, hi);
        }
    }
    Ok(out)
}
