//! Empirical risk, replace-one stability and the margin-dependent
//! generalization bound, plus the fixed-margin sweep experiment.
//!
//! With `f̂` the largest training score, the loss is bounded by `M + f̂`, the
//! replace-one stability is `β = 2f̂`, and with probability at least `1 − δ`
//!
//! ```text
//! R ≤ R_emp + sqrt( (M + f̂)² / (2nδ) + 6 f̂ (M + f̂) / δ )
//! ```

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{corrupt, CorruptionMode, KnowledgeGraph, Splits, Triple, DEFAULT_MAX_RETRIES};
use crate::error::{Error, Result};
use crate::eval::{check_compatible, evaluate_triples, EvalOptions};
use crate::margin::MarginTable;
use crate::model::EmbeddingModel;
use crate::train::{train, MarginMode, TrainConfig};

/// Margin used for each hinge term.
#[derive(Debug, Clone, Copy)]
pub enum MarginSource<'a> {
    Constant(f64),
    /// Per `(head, relation)` margins; pairs missing from the table use the
    /// table mean.
    Table(&'a MarginTable),
}

impl MarginSource<'_> {
    fn resolve(&self) -> impl Fn(&Triple) -> f64 + '_ {
        let mean = match self {
            MarginSource::Table(t) => t.mean_m_opt(),
            MarginSource::Constant(m) => *m,
        };
        move |t: &Triple| match self {
            MarginSource::Constant(m) => *m,
            MarginSource::Table(tb) => tb.m_opt(t.head, t.relation).unwrap_or(mean),
        }
    }
}

/// How risk terms pair positives with negatives; recorded in reports.
pub const RISK_CONVENTION: &str =
    "one uniform head-or-tail corruption per triple, drawn from ChaCha8Rng::seed_from_u64(corruption_seed) in split order";

/// Mean hinge loss over `triples`, each paired with one seeded corruption.
pub fn mean_hinge(
    model: &EmbeddingModel,
    graph: &KnowledgeGraph,
    triples: &[Triple],
    margins: MarginSource<'_>,
    seed: u64,
) -> Result<f64> {
    check_compatible(model, graph)?;
    if triples.is_empty() {
        return Err(Error::Argument("no triples to average over".into()));
    }
    let margin_of = margins.resolve();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for t in triples {
        let neg = corrupt(
            t,
            graph,
            &mut rng,
            CorruptionMode::Uniform,
            DEFAULT_MAX_RETRIES,
        )?;
        total += model.hinge_loss(t, &neg, margin_of(t))?;
    }
    Ok(total / triples.len() as f64)
}

/// `R_emp`: mean hinge loss over the training split.
pub fn empirical_risk(
    model: &EmbeddingModel,
    graph: &KnowledgeGraph,
    margins: MarginSource<'_>,
    seed: u64,
) -> Result<f64> {
    mean_hinge(model, graph, graph.train(), margins, seed)
}

/// `f̂`: the largest score of a training triple.
pub fn max_train_score(model: &EmbeddingModel, graph: &KnowledgeGraph) -> Result<f64> {
    check_compatible(model, graph)?;
    if graph.train().is_empty() {
        return Err(Error::Argument("training split is empty".into()));
    }
    Ok(graph
        .train()
        .iter()
        .map(|t| model.score_unchecked(t))
        .fold(0.0, f64::max))
}

/// Replace-one stability `β = 2f̂`.
pub fn stability_beta(model: &EmbeddingModel, graph: &KnowledgeGraph) -> Result<f64> {
    Ok(2.0 * max_train_score(model, graph)?)
}

/// Upper bound on the true risk holding with probability at least `1 − δ`.
pub fn generalization_bound(
    empirical_risk: f64,
    f_hat: f64,
    margin: f64,
    n: usize,
    delta: f64,
) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Argument(format!(
            "delta must be in (0, 1), got {delta}"
        )));
    }
    if n == 0 {
        return Err(Error::Argument("n must be at least 1".into()));
    }
    if !(margin >= 0.0) || !(f_hat >= 0.0) || !(empirical_risk >= 0.0) {
        return Err(Error::Argument(format!(
            "risk, f_hat and margin must be non-negative (got {empirical_risk}, {f_hat}, {margin})"
        )));
    }
    let span = margin + f_hat;
    let radicand = span * span / (2.0 * n as f64 * delta) + 6.0 * f_hat * span / delta;
    Ok(empirical_risk + radicand.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub empirical_risk: f64,
    pub f_hat: f64,
    pub beta: f64,
    pub n: usize,
    pub delta: f64,
    pub margin: f64,
    pub bound: f64,
    /// Mean hinge loss on the test split, as a stand-in for the true risk.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heldout_risk: Option<f64>,
    pub corruption_seed: u64,
    pub risk_convention: String,
}

impl RiskReport {
    pub const TSV_HEADER: &'static str =
        "margin\tdelta\tn\tempirical_risk\theldout_risk\tf_hat\tbeta\tbound";

    pub fn tsv_row(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.margin,
            self.delta,
            self.n,
            self.empirical_risk,
            self.heldout_risk
                .map_or_else(|| "NA".to_owned(), |r| r.to_string()),
            self.f_hat,
            self.beta,
            self.bound
        )
    }
}

/// Risk diagnostics of a fixed model under a constant margin.
pub fn risk_report(
    model: &EmbeddingModel,
    graph: &KnowledgeGraph,
    margin: f64,
    delta: f64,
    seed: u64,
) -> Result<RiskReport> {
    let r_emp = empirical_risk(model, graph, MarginSource::Constant(margin), seed)?;
    let f_hat = max_train_score(model, graph)?;
    let n = graph.train().len();
    let heldout_risk = if graph.test().is_empty() {
        None
    } else {
        Some(mean_hinge(
            model,
            graph,
            graph.test(),
            MarginSource::Constant(margin),
            seed,
        )?)
    };
    Ok(RiskReport {
        empirical_risk: r_emp,
        f_hat,
        beta: 2.0 * f_hat,
        n,
        delta,
        margin,
        bound: generalization_bound(r_emp, f_hat, margin, n, delta)?,
        heldout_risk,
        corruption_seed: seed,
        risk_convention: RISK_CONVENTION.to_owned(),
    })
}

/// A training sample: a correct triple with its corruption.
pub type Pair = (Triple, Triple);

/// Largest score over every triple (positive or negative) in the pair sets.
pub fn pairs_f_hat(model: &EmbeddingModel, pairs: &[Pair]) -> Result<f64> {
    pairs
        .iter()
        .flat_map(|(p, n)| [p, n])
        .try_fold(0.0, |acc: f64, t| Ok(acc.max(model.score(t)?)))
}

/// Outcome of a replace-one comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityCheck {
    /// Largest change of a single loss term.
    pub deviation: f64,
    /// `2f̂` over all triples involved in `S` and `S^i`.
    pub beta: f64,
}

/// Replaces pair `i` of `S` with `replacement` and compares the loss terms
/// of the two samples on a fixed model.
pub fn replace_one_deviation(
    model: &EmbeddingModel,
    pairs: &[Pair],
    i: usize,
    replacement: Pair,
    margin: f64,
) -> Result<StabilityCheck> {
    if i >= pairs.len() {
        return Err(Error::Argument(format!(
            "index {i} out of range for {} pairs",
            pairs.len()
        )));
    }
    let mut replaced = pairs.to_vec();
    replaced[i] = replacement;
    let mut deviation: f64 = 0.0;
    for ((p, n), (p2, n2)) in pairs.iter().zip(&replaced) {
        let a = model.hinge_loss(p, n, margin)?;
        let b = model.hinge_loss(p2, n2, margin)?;
        deviation = deviation.max((a - b).abs());
    }
    let f_hat = pairs_f_hat(model, pairs)?.max(pairs_f_hat(model, &replaced)?);
    Ok(StabilityCheck {
        deviation,
        beta: 2.0 * f_hat,
    })
}

/// Largest graph accepted by [`retrained_replace_one_deviation`].
pub const RETRAIN_LIMIT: usize = 200;

/// Replace-one comparison with retraining: trains on `S` and on `S^i` (train
/// triple `i` swapped for `replacement`) and measures the largest change of
/// a loss term over the original pairs. Quadratic in practice, so only
/// accepted on graphs with at most [`RETRAIN_LIMIT`] training triples.
pub fn retrained_replace_one_deviation(
    graph: &KnowledgeGraph,
    config: &TrainConfig,
    margin: f64,
    i: usize,
    replacement: Triple,
    seed: u64,
) -> Result<StabilityCheck> {
    let n = graph.train().len();
    if n > RETRAIN_LIMIT {
        return Err(Error::Argument(format!(
            "retraining stability check is limited to {RETRAIN_LIMIT} training triples, got {n}"
        )));
    }
    if i >= n {
        return Err(Error::Argument(format!(
            "index {i} out of range for {n} training triples"
        )));
    }
    let mut train_i = graph.train().to_vec();
    train_i[i] = replacement;
    let graph_i = KnowledgeGraph::new(
        graph.entities().clone(),
        graph.relations().clone(),
        Splits {
            train: train_i,
            valid: graph.valid().to_vec(),
            test: graph.test().to_vec(),
            ..Default::default()
        },
    )?;
    let cfg = TrainConfig {
        margin_mode: MarginMode::Fixed(margin),
        early_stopping: None,
        ..config.clone()
    };
    let (model_s, _) = train(graph, &cfg)?;
    let (model_si, _) = train(&graph_i, &cfg)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<Pair> = graph
        .train()
        .iter()
        .map(|t| {
            Ok((
                *t,
                corrupt(
                    t,
                    graph,
                    &mut rng,
                    CorruptionMode::Uniform,
                    DEFAULT_MAX_RETRIES,
                )?,
            ))
        })
        .collect::<Result<_>>()?;
    let mut deviation: f64 = 0.0;
    for (p, q) in &pairs {
        let a = model_s.hinge_loss(p, q, margin)?;
        let b = model_si.hinge_loss(p, q, margin)?;
        deviation = deviation.max((a - b).abs());
    }
    let beta = 2.0 * pairs_f_hat(&model_s, &pairs)?.max(pairs_f_hat(&model_si, &pairs)?);
    Ok(StabilityCheck { deviation, beta })
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Base configuration; its margin mode is replaced per row.
    pub train: TrainConfig,
    pub delta: f64,
    pub corruption_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub margin: f64,
    pub raw_mean_rank: f64,
    pub filtered_mean_rank: f64,
    pub empirical_risk: f64,
    pub f_hat: f64,
    pub beta: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub delta: f64,
    pub n: usize,
    /// Which split the mean ranks were measured on.
    pub eval_split: String,
    pub risk_convention: String,
}

impl SweepReport {
    pub const TSV_HEADER: &'static str =
        "margin\traw_mean_rank\tfiltered_mean_rank\tempirical_risk\tf_hat\tbeta\tbound";

    pub fn to_tsv(&self) -> String {
        let mut out = format!("{}\n", Self::TSV_HEADER);
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.margin,
                r.raw_mean_rank,
                r.filtered_mean_rank,
                r.empirical_risk,
                r.f_hat,
                r.beta,
                r.bound
            );
        }
        out
    }

    /// Row with the lowest filtered mean rank.
    pub fn best(&self) -> Option<&SweepRow> {
        self.rows
            .iter()
            .min_by(|a, b| a.filtered_mean_rank.total_cmp(&b.filtered_mean_rank))
    }
}

/// Trains one fixed-margin model per margin and reports link prediction
/// together with the risk diagnostics. Margins run concurrently.
pub fn margin_sweep(
    graph: &KnowledgeGraph,
    margins: &[f64],
    config: &SweepConfig,
) -> Result<SweepReport> {
    if margins.is_empty() {
        return Err(Error::Argument("no margins to sweep".into()));
    }
    let (eval_split, eval_triples) = if !graph.test().is_empty() {
        ("test", graph.test())
    } else if !graph.valid().is_empty() {
        ("valid", graph.valid())
    } else {
        return Err(Error::Argument(
            "sweep needs a test or validation split".into(),
        ));
    };
    let opts = EvalOptions {
        hits_at: vec![],
        per_relation: false,
    };
    let rows: Vec<Result<SweepRow>> = margins
        .par_iter()
        .map(|&m| {
            let cfg = TrainConfig {
                margin_mode: MarginMode::Fixed(m),
                ..config.train.clone()
            };
            cfg.validate()?;
            let (model, _) = train(graph, &cfg)?;
            let lp = evaluate_triples(&model, graph, eval_triples, &opts)?;
            let risk = risk_report(&model, graph, m, config.delta, config.corruption_seed)?;
            Ok(SweepRow {
                margin: m,
                raw_mean_rank: lp.raw_mean_rank,
                filtered_mean_rank: lp.filtered_mean_rank,
                empirical_risk: risk.empirical_risk,
                f_hat: risk.f_hat,
                beta: risk.beta,
                bound: risk.bound,
            })
        })
        .collect();
    Ok(SweepReport {
        rows: rows.into_iter().collect::<Result<_>>()?,
        delta: config.delta,
        n: graph.train().len(),
        eval_split: eval_split.to_owned(),
        risk_convention: RISK_CONVENTION.to_owned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Vocab;
    use crate::model::Dissimilarity;

    #[test]
    fn bound_closed_form() {
        let b = generalization_bound(0.0, 2.0, 1.0, 100, 0.05).unwrap();
        assert!((b - 720.9f64.sqrt()).abs() < 1e-9);
        assert!((b - 26.8496).abs() < 1e-4);
        // f̂ = 0 leaves only the first term.
        let b0 = generalization_bound(0.3, 0.0, 2.0, 10, 0.1).unwrap();
        assert!((b0 - (0.3 + (4.0f64 / 2.0).sqrt())).abs() < 1e-12);
        assert!(generalization_bound(0.0, 1.0, 1.0, 10, 1.0).is_err());
        assert!(generalization_bound(0.0, 1.0, 1.0, 10, 0.0).is_err());
    }

    #[test]
    fn bound_monotonicity() {
        let at = |m: f64, n: usize, d: f64| generalization_bound(0.1, 1.5, m, n, d).unwrap();
        let ms = [0.1, 0.5, 1.0, 2.0, 10.0];
        assert!(ms
            .windows(2)
            .all(|w| at(w[0], 50, 0.05) < at(w[1], 50, 0.05)));
        assert!(at(1.0, 10, 0.05) > at(1.0, 1000, 0.05));
        assert!(at(1.0, 10, 0.01) > at(1.0, 10, 0.99));
    }

    fn tiny() -> (KnowledgeGraph, EmbeddingModel) {
        let train = vec![
            Triple::new(0, 0, 1),
            Triple::new(1, 0, 2),
            Triple::new(2, 1, 3),
        ];
        let g = KnowledgeGraph::new(
            Vocab::numeric(5),
            Vocab::numeric(2),
            Splits {
                train,
                ..Default::default()
            },
        )
        .unwrap();
        let m = EmbeddingModel::init(5, 2, 3, Dissimilarity::L2, 4).unwrap();
        (g, m)
    }

    #[test]
    fn beta_is_twice_max_score() {
        let (g, m) = tiny();
        let brute = g
            .train()
            .iter()
            .map(|t| m.score(t).unwrap())
            .fold(f64::MIN, f64::max);
        assert_eq!(max_train_score(&m, &g).unwrap(), brute);
        assert_eq!(stability_beta(&m, &g).unwrap(), 2.0 * brute);

        let zero =
            EmbeddingModel::from_parts(3, Dissimilarity::L2, vec![0.0; 15], vec![0.0; 6]).unwrap();
        assert_eq!(stability_beta(&zero, &g).unwrap(), 0.0);
    }

    #[test]
    fn perfect_separation_has_zero_risk() {
        // Positives score 0, every corruption scores ≥ 1 under M = 1.
        let train = vec![Triple::new(0, 0, 1)];
        let g = KnowledgeGraph::new(
            Vocab::numeric(3),
            Vocab::numeric(1),
            Splits {
                train,
                ..Default::default()
            },
        )
        .unwrap();
        let m = EmbeddingModel::from_parts(1, Dissimilarity::L1, vec![0.0, 1.0, 5.0], vec![1.0])
            .unwrap();
        // Corruptions: (1,0,1)=1, (2,0,1)=4, (0,0,0)=1, (0,0,2)=4.
        assert_eq!(
            empirical_risk(&m, &g, MarginSource::Constant(1.0), 3).unwrap(),
            0.0
        );
    }

    #[test]
    fn risk_matches_brute_force_sum() {
        let (g, m) = tiny();
        let seed = 21;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sum = 0.0;
        for t in g.train() {
            let n = corrupt(
                t,
                &g,
                &mut rng,
                CorruptionMode::Uniform,
                DEFAULT_MAX_RETRIES,
            )
            .unwrap();
            let v = m.score(t).unwrap() + 0.7 - m.score(&n).unwrap();
            sum += v.max(0.0);
        }
        let got = empirical_risk(&m, &g, MarginSource::Constant(0.7), seed).unwrap();
        assert!((got - sum / 3.0).abs() < 1e-12);
        let more = empirical_risk(&m, &g, MarginSource::Constant(1.7), seed).unwrap();
        assert!(more >= got);
    }

    #[test]
    fn risk_report_satisfies_identities() {
        let (g, m) = tiny();
        let r = risk_report(&m, &g, 1.0, 0.05, 1).unwrap();
        assert_eq!(r.beta, 2.0 * r.f_hat);
        assert!(r.bound >= r.empirical_risk);
        assert_eq!(
            r.tsv_row().split('\t').count(),
            RiskReport::TSV_HEADER.split('\t').count()
        );
    }

    #[test]
    fn retrained_check_is_limited_to_small_graphs() {
        let (g, _) = tiny();
        let cfg = TrainConfig {
            dim: 3,
            epochs: 2,
            batch_size: 2,
            early_stopping: None,
            ..Default::default()
        };
        let check =
            retrained_replace_one_deviation(&g, &cfg, 1.0, 0, Triple::new(3, 0, 4), 0).unwrap();
        assert!(check.deviation.is_finite() && check.beta.is_finite());
        assert!(
            retrained_replace_one_deviation(&g, &cfg, 1.0, 9, Triple::new(3, 0, 4), 0).is_err()
        );
    }
}
