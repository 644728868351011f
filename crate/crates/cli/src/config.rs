//! Experiment configuration: built-in defaults, overlaid in turn by a preset,
//! a TOML file and command-line flags. The resolved result is written next
//! to every run so that `--config <run>/config.toml` replays it.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use transa_core::margin::ActiveSetConfig;
use transa_core::train::EarlyStopping;
use transa_core::{Dissimilarity, MarginMethod, MarginMode, TrainConfig};

use crate::UsageError;

/// One layer of overrides. Every field is optional; unset fields leave the
/// lower layer untouched. Field names double as TOML keys.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    /// Ingested graph directory
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// SGD learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    /// Embedding dimension
    #[arg(long)]
    pub dim: Option<usize>,
    /// Minibatch size
    #[arg(long)]
    pub batch: Option<usize>,
    /// Weight of the entity margin against the relation margin, in [0, 1]
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// adaptive, adaptive-mean or fixed:<M>
    #[arg(long)]
    pub margin_mode: Option<String>,
    /// l1, l2 or l2sq
    #[arg(long)]
    pub dissim: Option<String>,
    /// Recompute margins every this many epochs
    #[arg(long)]
    pub refresh_every: Option<usize>,
    /// active or exact entity-margin computation
    #[arg(long)]
    pub margin_method: Option<String>,
    #[arg(long)]
    pub active_fraction: Option<f64>,
    #[arg(long)]
    pub active_rounds: Option<usize>,
    #[arg(long)]
    pub active_seed: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Validate every this many epochs for early stopping; 0 disables it
    #[arg(long)]
    pub early_stop_every: Option<usize>,
    #[arg(long)]
    pub early_stop_patience: Option<usize>,
    #[arg(long)]
    pub max_corruption_retries: Option<usize>,
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub lr: f64,
    pub dim: usize,
    pub batch: usize,
    pub mu: f64,
    pub epochs: usize,
    pub margin_mode: String,
    pub dissim: String,
    pub refresh_every: usize,
    pub margin_method: String,
    pub active_fraction: f64,
    pub active_rounds: usize,
    pub active_seed: u64,
    pub seed: u64,
    pub early_stop_every: usize,
    pub early_stop_patience: usize,
    pub max_corruption_retries: usize,
    pub threads: usize,
}

pub const PRESETS: [&str; 4] = ["wn18-lp", "fb15k-lp", "wn11-tc", "fb13-tc"];

/// Published optimal settings per dataset and task.
pub fn preset(name: &str) -> Result<ConfigLayer> {
    let (lr, dim, batch) = match name {
        "wn18-lp" => (0.001, 100, 1440),
        "fb15k-lp" => (0.001, 50, 4800),
        "wn11-tc" => (0.001, 220, 120),
        "fb13-tc" => (0.001, 50, 480),
        other => {
            return Err(UsageError(format!(
                "unknown preset {other:?}, expected one of {}",
                PRESETS.join(", ")
            ))
            .into())
        }
    };
    Ok(ConfigLayer {
        lr: Some(lr),
        dim: Some(dim),
        batch: Some(batch),
        mu: Some(0.5),
        dissim: Some("l1".into()),
        ..Default::default()
    })
}

impl ConfigLayer {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        // A resolved config carries a few keys that are not overrides.
        let mut table: toml::Table = toml::from_str(&text)
            .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
        table.remove("preset");
        table.remove("threads");
        table
            .try_into()
            .map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let active = ActiveSetConfig::default();
        let es = t.early_stopping.unwrap_or_default();
        ExperimentConfig {
            graph: PathBuf::new(),
            preset: None,
            lr: t.learning_rate,
            dim: t.dim,
            batch: t.batch_size,
            mu: t.mu,
            epochs: t.epochs,
            margin_mode: t.margin_mode.to_string(),
            dissim: t.dissimilarity.to_string(),
            refresh_every: t.margin_refresh_every,
            margin_method: "active".into(),
            active_fraction: active.fraction,
            active_rounds: active.rounds,
            active_seed: active.rng_seed,
            seed: t.seed,
            early_stop_every: es.every,
            early_stop_patience: es.patience,
            max_corruption_retries: t.max_corruption_retries,
            threads: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn apply(&mut self, layer: &ConfigLayer) {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = &layer.$field { self.$field = v.clone(); })*
            };
        }
        take!(
            graph,
            lr,
            dim,
            batch,
            mu,
            epochs,
            margin_mode,
            dissim,
            refresh_every,
            margin_method,
            active_fraction,
            active_rounds,
            active_seed,
            seed,
            early_stop_every,
            early_stop_patience,
            max_corruption_retries
        );
    }

    /// Defaults, then preset, then config file, then flags.
    pub fn resolve(
        preset_name: Option<&str>,
        config_file: Option<&Path>,
        flags: &ConfigLayer,
        threads: usize,
    ) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        if let Some(name) = preset_name {
            cfg.apply(&preset(name)?);
            cfg.preset = Some(name.to_owned());
        }
        if let Some(path) = config_file {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            let table: toml::Table = toml::from_str(&text)
                .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
            if preset_name.is_none() {
                if let Some(p) = table.get("preset").and_then(|v| v.as_str()) {
                    cfg.preset = Some(p.to_owned());
                }
            }
            cfg.apply(&ConfigLayer::load(path)?);
        }
        cfg.apply(flags);
        cfg.threads = threads;
        if cfg.graph.as_os_str().is_empty() {
            return Err(UsageError(
                "no graph given; pass --graph or set graph in the config file".into(),
            )
            .into());
        }
        cfg.train_config()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let usage = |e: transa_core::Error| UsageError(e.to_string());
        let margin_mode: MarginMode = self.margin_mode.parse().map_err(usage)?;
        let dissimilarity: Dissimilarity = self.dissim.parse().map_err(usage)?;
        let margin_method = match self.margin_method.as_str() {
            "exact" => MarginMethod::Exact,
            "active" => MarginMethod::Active(ActiveSetConfig {
                fraction: self.active_fraction,
                rounds: self.active_rounds,
                rng_seed: self.active_seed,
            }),
            other => {
                return Err(UsageError(format!(
                    "unknown margin method {other:?}, expected active or exact"
                ))
                .into())
            }
        };
        let early_stopping = (self.early_stop_every > 0).then_some(EarlyStopping {
            every: self.early_stop_every,
            patience: self.early_stop_patience,
        });
        let cfg = TrainConfig {
            learning_rate: self.lr,
            dim: self.dim,
            batch_size: self.batch,
            mu: self.mu,
            epochs: self.epochs,
            margin_mode,
            margin_refresh_every: self.refresh_every,
            margin_method,
            dissimilarity,
            seed: self.seed,
            early_stopping,
            max_corruption_retries: self.max_corruption_retries,
        };
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }
}
