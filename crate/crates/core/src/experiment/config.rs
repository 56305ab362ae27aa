use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{BlobConfig, LabelSkew};
use crate::fl::{FederationConfig, StrategyConfig, StrategyKind};
use crate::losses::{Bandwidth, MmdConfig, ScalingMode, TransferKind, DEFAULT_TAU};
use crate::nn::{Architecture, SgdConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Blobs,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    LabelSkew,
    Dirichlet,
}

/// Flat experiment description. Every key is optional in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: String,

    pub dataset: DatasetKind,
    pub csv_path: Option<String>,
    /// Blob class count, or an explicit class count for CSV data.
    pub classes: Option<usize>,
    pub dim: usize,
    pub radius: f64,
    pub noise: f64,
    pub samples_per_class: usize,

    pub partition: PartitionKind,
    pub clients: usize,
    pub min_classes: usize,
    /// Defaults to the total class count.
    pub max_classes: Option<usize>,
    pub dirichlet_alpha: f64,
    pub global_test_per_class: usize,

    pub hidden: Vec<usize>,
    pub feature_relu: bool,

    pub rounds: usize,
    pub sample_ratio: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub weighted_aggregation: bool,
    pub diagnostics: bool,

    pub strategy: StrategyKind,
    pub alpha: f64,
    pub scaling: ScalingMode,
    pub lambda: f64,
    pub transfer: TransferKind,
    pub mu: f64,
    pub tau: f64,
    pub mmd_multipliers: Vec<f64>,
    /// Fixed kernel bandwidth; the median heuristic when absent.
    pub mmd_bandwidth: Option<f64>,
}

pub const DEFAULT_BLOB_CLASSES: usize = 6;

impl Default for ExperimentConfig {
    fn default() -> Self {
        let sgd = SgdConfig::default();
        let strategy = StrategyConfig::default();
        Self {
            seed: 0,
            output_dir: "runs/default".into(),
            dataset: DatasetKind::Blobs,
            csv_path: None,
            classes: None,
            dim: 16,
            radius: 3.0,
            noise: 1.0,
            samples_per_class: 300,
            partition: PartitionKind::LabelSkew,
            clients: 10,
            min_classes: 2,
            max_classes: None,
            dirichlet_alpha: 0.5,
            global_test_per_class: 50,
            hidden: vec![32],
            feature_relu: true,
            rounds: 30,
            sample_ratio: 0.2,
            local_epochs: 10,
            batch_size: 64,
            lr: sgd.lr,
            momentum: sgd.momentum,
            weight_decay: sgd.weight_decay,
            weighted_aggregation: false,
            diagnostics: true,
            strategy: strategy.kind,
            alpha: strategy.alpha,
            scaling: strategy.scaling,
            lambda: strategy.lambda,
            transfer: strategy.transfer,
            mu: strategy.mu,
            tau: DEFAULT_TAU,
            mmd_multipliers: MmdConfig::default().multipliers,
            mmd_bandwidth: None,
        }
    }
}

fn parse_override(raw: &str) -> Result<(String, toml::Value)> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| Error::Config(vec![format!("override `{raw}`: expected key=value")]))?;
    let key = key.trim().to_string();
    if key.is_empty() {
        return Err(Error::Config(vec![format!("override `{raw}`: empty key")]));
    }
    let value = value.trim();
    // bare words such as `map` or `runs/x` are taken as strings
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    Ok((key, parsed))
}

impl ExperimentConfig {
    /// Parses TOML text, applies `key=value` overrides and validates.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(vec![e.message().to_string()]))?;
        for raw in overrides {
            let (key, value) = parse_override(raw)?;
            table.insert(key, value);
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(vec![e.message().to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML file; see [`ExperimentConfig::from_toml_str`].
    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    /// Reports every out-of-range field at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let mut check = |ok: bool, name: &str, value: String, allowed: &str| {
            if !ok {
                errs.push(format!("{name} = {value}: must be {allowed}"));
            }
        };
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let pos = |x: f64| x > 0.0 && x.is_finite();
        let nonneg = |x: f64| x >= 0.0 && x.is_finite();

        check(
            self.dataset != DatasetKind::Csv || self.csv_path.is_some(),
            "csv_path",
            "<missing>".into(),
            "set when dataset = \"csv\"",
        );
        if self.dataset == DatasetKind::Blobs {
            let c = self.blob_classes();
            check(c >= 2, "classes", c.to_string(), ">= 2");
            check(self.dim >= 1, "dim", self.dim.to_string(), ">= 1");
            check(nonneg(self.radius), "radius", self.radius.to_string(), ">= 0");
            check(pos(self.noise), "noise", self.noise.to_string(), "> 0");
            check(
                self.samples_per_class > self.global_test_per_class,
                "samples_per_class",
                self.samples_per_class.to_string(),
                "> global_test_per_class",
            );
        }
        check(self.clients >= 1, "clients", self.clients.to_string(), ">= 1");
        check(self.min_classes >= 1, "min_classes", self.min_classes.to_string(), ">= 1");
        if let Some(max) = self.max_classes {
            check(max >= self.min_classes, "max_classes", max.to_string(), ">= min_classes");
        }
        check(pos(self.dirichlet_alpha), "dirichlet_alpha", self.dirichlet_alpha.to_string(), "> 0");
        check(
            self.global_test_per_class >= 1,
            "global_test_per_class",
            self.global_test_per_class.to_string(),
            ">= 1",
        );
        check(
            self.hidden.iter().all(|&h| h >= 1),
            "hidden",
            format!("{:?}", self.hidden),
            "a list of positive widths",
        );
        check(self.rounds >= 1, "rounds", self.rounds.to_string(), ">= 1");
        check(
            self.sample_ratio > 0.0 && self.sample_ratio <= 1.0,
            "sample_ratio",
            self.sample_ratio.to_string(),
            "in (0, 1]",
        );
        check(
            self.strategy != StrategyKind::Map || self.local_epochs >= 2,
            "local_epochs",
            self.local_epochs.to_string(),
            ">= 2 for strategy map",
        );
        check(self.batch_size >= 1, "batch_size", self.batch_size.to_string(), ">= 1");
        check(pos(self.lr), "lr", self.lr.to_string(), "> 0");
        check(
            (0.0..1.0).contains(&self.momentum),
            "momentum",
            self.momentum.to_string(),
            "in [0, 1)",
        );
        check(nonneg(self.weight_decay), "weight_decay", self.weight_decay.to_string(), ">= 0");
        check(unit(self.alpha), "alpha", self.alpha.to_string(), "in [0, 1]");
        check(unit(self.lambda), "lambda", self.lambda.to_string(), "in [0, 1]");
        check(nonneg(self.mu), "mu", self.mu.to_string(), ">= 0");
        check(pos(self.tau), "tau", self.tau.to_string(), "> 0");
        check(
            !self.mmd_multipliers.is_empty() && self.mmd_multipliers.iter().all(|&m| pos(m)),
            "mmd_multipliers",
            format!("{:?}", self.mmd_multipliers),
            "a nonempty list of positive numbers",
        );
        if let Some(b) = self.mmd_bandwidth {
            check(pos(b), "mmd_bandwidth", b.to_string(), "> 0");
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn blob_classes(&self) -> usize {
        self.classes.unwrap_or(DEFAULT_BLOB_CLASSES)
    }

    pub fn blob_config(&self) -> BlobConfig {
        BlobConfig {
            classes: self.blob_classes(),
            dim: self.dim,
            radius: self.radius,
            noise: self.noise,
            samples_per_class: self.samples_per_class,
        }
    }

    pub fn label_skew(&self, classes: usize) -> LabelSkew {
        LabelSkew {
            clients: self.clients,
            min_classes: self.min_classes,
            max_classes: self.max_classes.unwrap_or(classes),
        }
    }

    pub fn architecture(&self, input_dim: usize, classes: usize) -> Architecture {
        Architecture {
            input_dim,
            hidden: self.hidden.clone(),
            feature_relu: self.feature_relu,
            classes,
        }
    }

    pub fn federation(&self) -> FederationConfig {
        FederationConfig {
            rounds: self.rounds,
            sample_ratio: self.sample_ratio,
            local_epochs: self.local_epochs,
            batch_size: self.batch_size,
            sgd: SgdConfig {
                lr: self.lr,
                momentum: self.momentum,
                weight_decay: self.weight_decay,
            },
            strategy: StrategyConfig {
                kind: self.strategy,
                alpha: self.alpha,
                scaling: self.scaling,
                lambda: self.lambda,
                transfer: self.transfer,
                mu: self.mu,
                tau: self.tau,
                mmd: MmdConfig {
                    multipliers: self.mmd_multipliers.clone(),
                    bandwidth: self.mmd_bandwidth.map_or(Bandwidth::Median, Bandwidth::Fixed),
                },
            },
            weighted_aggregation: self.weighted_aggregation,
            diagnostics: self.diagnostics,
        }
    }
}
