//! Minibatch SGD over (positive, corrupted) pairs with fixed or locally
//! adaptive margins.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    corrupt, CorruptionMode, KnowledgeGraph, NeighborhoodIndex, Triple, DEFAULT_MAX_RETRIES,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate_triples, EvalOptions};
use crate::margin::{refresh_table, MarginMethod, MarginTable};
use crate::model::{Dissimilarity, EmbeddingModel};

/// Where the per-pair hinge margin comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum MarginMode {
    /// `M_opt(h, r)` looked up per training triple.
    Adaptive,
    /// The mean of the table's `M_opt` values, used for every triple.
    AdaptiveMean,
    /// A constant margin (plain TransE).
    Fixed(f64),
}

impl fmt::Display for MarginMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarginMode::Adaptive => f.write_str("adaptive"),
            MarginMode::AdaptiveMean => f.write_str("adaptive-mean"),
            MarginMode::Fixed(m) => write!(f, "fixed:{m}"),
        }
    }
}

impl FromStr for MarginMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(MarginMode::Adaptive),
            "adaptive-mean" => Ok(MarginMode::AdaptiveMean),
            _ => {
                let m = s
                    .strip_prefix("fixed:")
                    .and_then(|m| m.parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::Argument(format!(
                            "bad margin mode {s:?}, expected adaptive, adaptive-mean or fixed:<M>"
                        ))
                    })?;
                if !(m >= 0.0) || !m.is_finite() {
                    return Err(Error::Argument(format!(
                        "fixed margin must be non-negative, got {m}"
                    )));
                }
                Ok(MarginMode::Fixed(m))
            }
        }
    }
}

impl From<MarginMode> for String {
    fn from(m: MarginMode) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for MarginMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Validation-based early stopping on filtered mean rank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    /// Evaluate every this many epochs.
    pub every: usize,
    /// Stop after this many evaluations without improvement.
    pub patience: usize,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        EarlyStopping {
            every: 50,
            patience: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub dim: usize,
    pub batch_size: usize,
    pub mu: f64,
    pub epochs: usize,
    pub margin_mode: MarginMode,
    /// Recompute the margin table every this many epochs.
    pub margin_refresh_every: usize,
    pub margin_method: MarginMethod,
    pub dissimilarity: Dissimilarity,
    pub seed: u64,
    pub early_stopping: Option<EarlyStopping>,
    pub max_corruption_retries: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            dim: 100,
            batch_size: 1440,
            mu: 0.5,
            epochs: 1000,
            margin_mode: MarginMode::Adaptive,
            margin_refresh_every: 1,
            margin_method: MarginMethod::default(),
            dissimilarity: Dissimilarity::L1,
            seed: 0,
            early_stopping: Some(EarlyStopping::default()),
            max_corruption_retries: DEFAULT_MAX_RETRIES,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Argument(msg));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.dim == 0 || self.batch_size == 0 {
            return bad("dimension and batch size must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return bad(format!("mu must be in [0, 1], got {}", self.mu));
        }
        if self.margin_refresh_every == 0 {
            return bad("margin refresh interval must be positive".into());
        }
        if let MarginMethod::Active(cfg) = &self.margin_method {
            cfg.validate()?;
        }
        if let Some(es) = &self.early_stopping {
            if es.every == 0 || es.patience == 0 {
                return bad("early stopping interval and patience must be positive".into());
            }
        }
        Ok(())
    }

    pub fn is_adaptive(&self) -> bool {
        !matches!(self.margin_mode, MarginMode::Fixed(_))
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean hinge loss of the sampled pairs, each taken just before its update.
    pub mean_hinge_loss: f64,
    pub wall_time_secs: f64,
    pub margin_refreshed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub valid_filtered_mean_rank: Option<f64>,
}

/// Stateful epoch-by-epoch trainer.
///
/// Model parameters come from `EmbeddingModel::init(.., seed)`; shuffling and
/// corruption draw from `ChaCha8Rng::seed_from_u64(seed + 1)`. Each epoch
/// shuffles the training indices, then per minibatch draws one corruption per
/// positive (in batch order) before applying the updates in the same order.
pub struct Trainer<'g> {
    graph: &'g KnowledgeGraph,
    index: Option<NeighborhoodIndex>,
    config: TrainConfig,
    model: EmbeddingModel,
    last_good: EmbeddingModel,
    table: Option<MarginTable>,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl<'g> Trainer<'g> {
    pub fn new(graph: &'g KnowledgeGraph, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = EmbeddingModel::init(
            graph.num_entities(),
            graph.num_relations(),
            config.dim,
            config.dissimilarity,
            config.seed,
        )?;
        Self::with_model(graph, config, model)
    }

    /// Starts from an existing model instead of a fresh initialization.
    pub fn with_model(
        graph: &'g KnowledgeGraph,
        config: TrainConfig,
        model: EmbeddingModel,
    ) -> Result<Self> {
        config.validate()?;
        crate::eval::check_compatible(&model, graph)?;
        let index = config
            .is_adaptive()
            .then(|| NeighborhoodIndex::build(graph));
        let rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
        Ok(Trainer {
            graph,
            index,
            last_good: model.clone(),
            model,
            config,
            table: None,
            rng,
            epoch: 0,
        })
    }

    pub fn model(&self) -> &EmbeddingModel {
        &self.model
    }

    pub fn into_model(self) -> EmbeddingModel {
        self.model
    }

    /// The model as it was after the last epoch that finished cleanly.
    pub fn last_good_model(&self) -> &EmbeddingModel {
        &self.last_good
    }

    pub fn margin_table(&self) -> Option<&MarginTable> {
        self.table.as_ref()
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    fn refresh_margins(&mut self) -> Result<()> {
        let index = self
            .index
            .as_ref()
            .expect("adaptive training builds an index");
        self.table = Some(refresh_table(
            self.graph,
            index,
            &self.model,
            self.config.mu,
            &self.config.margin_method,
            self.epoch,
        )?);
        Ok(())
    }

    fn margin_for(&self, t: &Triple, mean: f64) -> f64 {
        match self.config.margin_mode {
            MarginMode::Fixed(m) => m,
            MarginMode::AdaptiveMean => mean,
            MarginMode::Adaptive => self
                .table
                .as_ref()
                .and_then(|tb| tb.m_opt(t.head, t.relation))
                .unwrap_or(0.0),
        }
    }

    pub fn run_epoch(&mut self) -> Result<EpochLog> {
        let start = Instant::now();
        let refreshed = self.config.is_adaptive()
            && self.epoch.is_multiple_of(self.config.margin_refresh_every);
        if refreshed {
            self.refresh_margins()?;
        }
        let mean_margin = self.table.as_ref().map(MarginTable::mean_m_opt);
        let train = self.graph.train();
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut self.rng);

        let mut total = 0.0;
        let mut negatives = Vec::with_capacity(self.config.batch_size);
        for batch in order.chunks(self.config.batch_size) {
            negatives.clear();
            for &i in batch {
                negatives.push(corrupt(
                    &train[i],
                    self.graph,
                    &mut self.rng,
                    CorruptionMode::Uniform,
                    self.config.max_corruption_retries,
                )?);
            }
            for (&i, neg) in batch.iter().zip(&negatives) {
                let pos = &train[i];
                let margin = self.margin_for(pos, mean_margin.unwrap_or(0.0));
                let loss = self
                    .model
                    .sgd_step(pos, neg, margin, self.config.learning_rate)?;
                if !loss.is_finite() {
                    self.model = self.last_good.clone();
                    return Err(Error::NonFinite {
                        epoch: self.epoch,
                        what: format!("hinge loss {loss} on triple {pos:?}"),
                    });
                }
                total += loss;
            }
        }
        let log = EpochLog {
            epoch: self.epoch,
            mean_hinge_loss: total / train.len() as f64,
            wall_time_secs: start.elapsed().as_secs_f64(),
            margin_refreshed: refreshed,
            mean_margin: if self.config.is_adaptive() {
                mean_margin
            } else {
                None
            },
            valid_filtered_mean_rank: None,
        };
        self.epoch += 1;
        self.last_good.clone_from(&self.model);
        Ok(log)
    }
}

/// Trains for `config.epochs` epochs (or until early stopping triggers) and
/// returns the final model, or the best validated one when early stopping is
/// enabled and the graph has a validation split.
pub fn train(
    graph: &KnowledgeGraph,
    config: &TrainConfig,
) -> Result<(EmbeddingModel, Vec<EpochLog>)> {
    train_keeping_progress(graph, config).map_err(|f| f.error)
}

/// A training run that stopped with an error after some progress.
#[derive(Debug)]
pub struct TrainFailure {
    pub error: Error,
    /// The model after the last epoch that finished cleanly, when training
    /// got past initialization.
    pub last_good: Option<EmbeddingModel>,
    pub logs: Vec<EpochLog>,
}

/// Like [`train`], but a failure keeps the last good model and the epoch log.
pub fn train_keeping_progress(
    graph: &KnowledgeGraph,
    config: &TrainConfig,
) -> std::result::Result<(EmbeddingModel, Vec<EpochLog>), Box<TrainFailure>> {
    let fail_early = |error| {
        Box::new(TrainFailure {
            error,
            last_good: None,
            logs: vec![],
        })
    };
    let mut trainer = Trainer::new(graph, config.clone()).map_err(fail_early)?;
    let mut logs = Vec::with_capacity(config.epochs);
    let stopping = config.early_stopping.filter(|_| !graph.valid().is_empty());
    let mut best: Option<(f64, EmbeddingModel)> = None;
    let mut stale = 0;
    let opts = EvalOptions {
        hits_at: vec![],
        per_relation: false,
    };
    for _ in 0..config.epochs {
        let step = trainer.run_epoch().and_then(|mut log| {
            if let Some(es) = stopping {
                if trainer.epochs_done() % es.every == 0 {
                    let mr = evaluate_triples(trainer.model(), graph, graph.valid(), &opts)?
                        .filtered_mean_rank;
                    log.valid_filtered_mean_rank = Some(mr);
                    log::info!("epoch {}: valid filtered mean rank {mr:.2}", log.epoch);
                }
            }
            Ok(log)
        });
        let log = match step {
            Ok(log) => log,
            Err(error) => {
                return Err(Box::new(TrainFailure {
                    error,
                    last_good: Some(trainer.last_good_model().clone()),
                    logs,
                }))
            }
        };
        if let Some(mr) = log.valid_filtered_mean_rank {
            if best.as_ref().is_none_or(|(b, _)| mr < *b) {
                best = Some((mr, trainer.model().clone()));
                stale = 0;
            } else {
                stale += 1;
            }
        }
        logs.push(log);
        if stopping.is_some_and(|es| stale >= es.patience) {
            log::info!("early stop after {} epochs", trainer.epochs_done());
            break;
        }
    }
    let model = match best {
        Some((_, m)) => m,
        None => trainer.into_model(),
    };
    Ok((model, logs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Splits, Vocab};

    fn chain_graph() -> KnowledgeGraph {
        let train = (0..12)
            .map(|i| Triple::new(i, i % 2, (i + 1) % 12))
            .collect();
        KnowledgeGraph::new(
            Vocab::numeric(12),
            Vocab::numeric(2),
            Splits {
                train,
                ..Default::default()
            },
        )
        .unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            dim: 4,
            batch_size: 5,
            epochs: 3,
            learning_rate: 0.01,
            early_stopping: None,
            ..Default::default()
        }
    }

    #[test]
    fn margin_mode_parsing() {
        assert_eq!(
            "adaptive".parse::<MarginMode>().unwrap(),
            MarginMode::Adaptive
        );
        assert_eq!(
            "fixed:2.5".parse::<MarginMode>().unwrap(),
            MarginMode::Fixed(2.5)
        );
        assert!("fixed:-1".parse::<MarginMode>().is_err());
        assert!("wide".parse::<MarginMode>().is_err());
        assert_eq!(MarginMode::Fixed(1.0).to_string(), "fixed:1");
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let g = chain_graph();
        let cfg = TrainConfig {
            epochs: 0,
            ..small_config()
        };
        let (m, logs) = train(&g, &cfg).unwrap();
        assert!(logs.is_empty());
        assert_eq!(
            m,
            EmbeddingModel::init(12, 2, 4, Dissimilarity::L1, cfg.seed).unwrap()
        );
    }

    #[test]
    fn training_is_deterministic() {
        let g = chain_graph();
        let a = train(&g, &small_config()).unwrap();
        let b = train(&g, &small_config()).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.len(), 3);
        assert!(a.1.iter().all(|l| l.margin_refreshed));
    }

    #[test]
    fn refresh_cadence() {
        let g = chain_graph();
        let cfg = TrainConfig {
            margin_refresh_every: 2,
            epochs: 5,
            ..small_config()
        };
        let (_, logs) = train(&g, &cfg).unwrap();
        let flags: Vec<bool> = logs.iter().map(|l| l.margin_refreshed).collect();
        assert_eq!(flags, [true, false, true, false, true]);
    }

    #[test]
    fn entity_norms_stay_bounded() {
        let g = chain_graph();
        let mut t = Trainer::new(
            &g,
            TrainConfig {
                learning_rate: 0.5,
                ..small_config()
            },
        )
        .unwrap();
        for _ in 0..3 {
            t.run_epoch().unwrap();
            for e in 0..12 {
                assert!(Dissimilarity::L2.norm(t.model().entity(e)) <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let g = chain_graph();
        assert!(Trainer::new(
            &g,
            TrainConfig {
                mu: 2.0,
                ..small_config()
            }
        )
        .is_err());
        assert!(Trainer::new(
            &g,
            TrainConfig {
                batch_size: 0,
                ..small_config()
            }
        )
        .is_err());
    }
}
