//! Link prediction (raw and filtered mean rank, hits@k) and triple
//! classification with per-relation thresholds.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    corrupt, CorruptionMode, EntityId, KnowledgeGraph, Position, RelationId, Triple,
};
use crate::error::{Error, Result};
use crate::model::{translation_score, EmbeddingModel};

/// Fails unless the model was built for the graph's vocabulary sizes.
pub fn check_compatible(model: &EmbeddingModel, graph: &KnowledgeGraph) -> Result<()> {
    if model.num_entities() != graph.num_entities() {
        return Err(Error::VocabMismatch {
            what: "entity count",
            expected: graph.num_entities(),
            found: model.num_entities(),
        });
    }
    if model.num_relations() != graph.num_relations() {
        return Err(Error::VocabMismatch {
            what: "relation count",
            expected: graph.num_relations(),
            found: model.num_relations(),
        });
    }
    Ok(())
}

/// Raw and filtered rank of one replacement query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ranks {
    pub raw: f64,
    pub filtered: f64,
}

/// Ranks the true entity among all `|E|` replacements at `position`,
/// ascending by score. Tied candidates share the mean rank of their block.
/// The filtered rank ignores candidates that form another correct triple.
pub fn rank_both(
    model: &EmbeddingModel,
    triple: &Triple,
    position: Position,
    graph: &KnowledgeGraph,
) -> Ranks {
    let dis = model.dissimilarity();
    let d = model.dim();
    let r = model.relation(triple.relation);
    let truth = position.entity(*triple);
    let target = model.score_unchecked(triple);
    let ents = model.entity_matrix();

    let (mut less_raw, mut tie_raw, mut less_f, mut tie_f) = (0usize, 0usize, 0usize, 0usize);
    let mut tally = |e: EntityId, s: f64| {
        if s > target || e == truth {
            return;
        }
        let filtered_out = graph.is_correct(&position.replace(*triple, e));
        if s < target {
            less_raw += 1;
            if !filtered_out {
                less_f += 1;
            }
        } else if s == target {
            tie_raw += 1;
            if !filtered_out {
                tie_f += 1;
            }
        }
    };
    match position {
        Position::Tail => {
            let h = model.entity(triple.head);
            for (e, cand) in ents.chunks_exact(d).enumerate() {
                tally(e as EntityId, translation_score(dis, h, r, cand));
            }
        }
        Position::Head => {
            let t = model.entity(triple.tail);
            for (e, cand) in ents.chunks_exact(d).enumerate() {
                tally(e as EntityId, translation_score(dis, cand, r, t));
            }
        }
    }
    Ranks {
        raw: 1.0 + less_raw as f64 + tie_raw as f64 / 2.0,
        filtered: 1.0 + less_f as f64 + tie_f as f64 / 2.0,
    }
}

/// Single-mode convenience wrapper around [`rank_both`].
pub fn rank_entity(
    model: &EmbeddingModel,
    triple: &Triple,
    position: Position,
    graph: &KnowledgeGraph,
    filtered: bool,
) -> f64 {
    let ranks = rank_both(model, triple, position, graph);
    if filtered {
        ranks.filtered
    } else {
        ranks.raw
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub hits_at: Vec<usize>,
    pub per_relation: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            hits_at: vec![1, 3, 10],
            per_relation: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationBreakdown {
    pub n_test: usize,
    pub raw_mean_rank: f64,
    pub filtered_mean_rank: f64,
}

/// Link-prediction summary. Ranks are averaged over head and tail queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub raw_mean_rank: f64,
    pub filtered_mean_rank: f64,
    /// hits@k are reported in addition to mean rank.
    pub raw_hits_at_k: BTreeMap<usize, f64>,
    pub filtered_hits_at_k: BTreeMap<usize, f64>,
    pub n_test: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_relation: Option<BTreeMap<String, RelationBreakdown>>,
}

impl EvalReport {
    /// Aligned text table with mean-rank and hits columns.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let ks: Vec<usize> = self.raw_hits_at_k.keys().copied().collect();
        let _ = write!(out, "{:<10}{:>12}", "setting", "mean_rank");
        for k in &ks {
            let _ = write!(out, "{:>10}", format!("hits@{k}"));
        }
        out.push('\n');
        for (name, mr, hits) in [
            ("raw", self.raw_mean_rank, &self.raw_hits_at_k),
            (
                "filtered",
                self.filtered_mean_rank,
                &self.filtered_hits_at_k,
            ),
        ] {
            let _ = write!(out, "{name:<10}{mr:>12.2}");
            for k in &ks {
                let _ = write!(out, "{:>10.4}", hits[k]);
            }
            out.push('\n');
        }
        let _ = writeln!(out, "n_test={}", self.n_test);
        out
    }

    /// `key<TAB>value` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = format!(
            "metric\tvalue\nraw_mean_rank\t{}\nfiltered_mean_rank\t{}\n",
            self.raw_mean_rank, self.filtered_mean_rank
        );
        for (k, v) in &self.raw_hits_at_k {
            let _ = writeln!(out, "raw_hits@{k}\t{v}");
        }
        for (k, v) in &self.filtered_hits_at_k {
            let _ = writeln!(out, "filtered_hits@{k}\t{v}");
        }
        let _ = writeln!(out, "n_test\t{}", self.n_test);
        out
    }
}

/// Head and tail ranks for every triple, in input order.
pub fn rank_all(
    model: &EmbeddingModel,
    graph: &KnowledgeGraph,
    triples: &[Triple],
) -> Vec<[Ranks; 2]> {
    triples
        .par_iter()
        .map(|t| {
            [
                rank_both(model, t, Position::Head, graph),
                rank_both(model, t, Position::Tail, graph),
            ]
        })
        .collect()
}

/// Evaluates link prediction on an arbitrary list of triples.
pub fn evaluate_triples(
    model: &EmbeddingModel,
    graph: &KnowledgeGraph,
    triples: &[Triple],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    check_compatible(model, graph)?;
    if triples.is_empty() {
        return Err(Error::Argument("no triples to evaluate".into()));
    }
    let ranks = rank_all(model, graph, triples);
    let n = (2 * triples.len()) as f64;
    let flat = || ranks.iter().flatten();
    let hits = |pick: fn(&Ranks) -> f64| -> BTreeMap<usize, f64> {
        opts.hits_at
            .iter()
            .map(|&k| (k, flat().filter(|r| pick(r) <= k as f64).count() as f64 / n))
            .collect()
    };
    let per_relation = opts.per_relation.then(|| {
        let mut acc: BTreeMap<RelationId, (usize, f64, f64)> = BTreeMap::new();
        for (t, [h, tl]) in triples.iter().zip(&ranks) {
            let e = acc.entry(t.relation).or_default();
            e.0 += 1;
            e.1 += h.raw + tl.raw;
            e.2 += h.filtered + tl.filtered;
        }
        acc.into_iter()
            .map(|(r, (count, raw, filt))| {
                (
                    graph.relations().name(r).unwrap_or("?").to_owned(),
                    RelationBreakdown {
                        n_test: count,
                        raw_mean_rank: raw / (2 * count) as f64,
                        filtered_mean_rank: filt / (2 * count) as f64,
                    },
                )
            })
            .collect()
    });
    Ok(EvalReport {
        raw_mean_rank: flat().map(|r| r.raw).sum::<f64>() / n,
        filtered_mean_rank: flat().map(|r| r.filtered).sum::<f64>() / n,
        raw_hits_at_k: hits(|r| r.raw),
        filtered_hits_at_k: hits(|r| r.filtered),
        n_test: triples.len(),
        per_relation,
    })
}

/// Link prediction over the graph's test split.
pub fn link_prediction(
    model: &EmbeddingModel,
    graph: &KnowledgeGraph,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if graph.test().is_empty() {
        return Err(Error::Argument("test split is empty".into()));
    }
    evaluate_triples(model, graph, graph.test(), opts)
}

/// Threshold chosen for one relation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationThreshold {
    pub threshold: f64,
    /// Validation accuracy at this threshold.
    pub accuracy: f64,
    pub n_valid: usize,
}

/// Per-relation decision thresholds: a triple is classified positive when
/// its score is strictly below its relation's threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierThresholds {
    pub per_relation: BTreeMap<RelationId, RelationThreshold>,
    /// Fitted on all validation scores pooled; used for unseen relations.
    pub global: RelationThreshold,
    /// Validation accuracy of the per-relation rule.
    pub accuracy: f64,
}

impl ClassifierThresholds {
    /// Threshold for `r`, and whether the pooled fallback was used.
    pub fn threshold(&self, r: RelationId) -> (f64, bool) {
        match self.per_relation.get(&r) {
            Some(t) => (t.threshold, false),
            None => (self.global.threshold, true),
        }
    }

    pub fn classify(&self, r: RelationId, score: f64) -> bool {
        score < self.threshold(r).0
    }
}

/// Accuracy-maximizing threshold for labeled scores.
///
/// Candidates are `−∞`, the midpoints between adjacent distinct scores, and
/// `+∞`; ties go to the smallest candidate.
pub fn best_threshold(scored: &[(f64, bool)]) -> RelationThreshold {
    let mut sorted: Vec<(f64, bool)> = scored.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = sorted.len();
    let n_neg = sorted.iter().filter(|s| !s.1).count();

    // Threshold −∞: everything negative.
    let mut correct = n_neg as i64;
    let mut best = (correct, f64::NEG_INFINITY);
    let mut i = 0;
    while i < n {
        let v = sorted[i].0;
        while i < n && sorted[i].0 == v {
            correct += if sorted[i].1 { 1 } else { -1 };
            i += 1;
        }
        let candidate = if i < n {
            v + (sorted[i].0 - v) / 2.0
        } else {
            f64::INFINITY
        };
        if correct > best.0 {
            best = (correct, candidate);
        }
    }
    RelationThreshold {
        threshold: best.1,
        accuracy: if n == 0 {
            0.0
        } else {
            best.0 as f64 / n as f64
        },
        n_valid: n,
    }
}

/// Fits per-relation thresholds from already computed validation scores.
pub fn fit_thresholds_from_scores(
    pos: &[(RelationId, f64)],
    neg: &[(RelationId, f64)],
) -> Result<ClassifierThresholds> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Argument(
            "threshold fitting needs positive and negative validation triples".into(),
        ));
    }
    let mut by_rel: BTreeMap<RelationId, Vec<(f64, bool)>> = BTreeMap::new();
    let mut pooled = Vec::with_capacity(pos.len() + neg.len());
    for (&(r, s), label) in pos
        .iter()
        .map(|p| (p, true))
        .chain(neg.iter().map(|n| (n, false)))
    {
        by_rel.entry(r).or_default().push((s, label));
        pooled.push((s, label));
    }
    let per_relation: BTreeMap<RelationId, RelationThreshold> = by_rel
        .iter()
        .map(|(&r, scored)| (r, best_threshold(scored)))
        .collect();
    let total: usize = per_relation.values().map(|t| t.n_valid).sum();
    let correct: f64 = per_relation
        .values()
        .map(|t| t.accuracy * t.n_valid as f64)
        .sum();
    Ok(ClassifierThresholds {
        per_relation,
        global: best_threshold(&pooled),
        accuracy: correct / total as f64,
    })
}

fn scored(model: &EmbeddingModel, triples: &[Triple]) -> Result<Vec<(RelationId, f64)>> {
    triples
        .iter()
        .map(|t| Ok((t.relation, model.score(t)?)))
        .collect()
}

/// Fits a threshold per relation by maximizing validation accuracy.
pub fn fit_thresholds(
    model: &EmbeddingModel,
    valid_pos: &[Triple],
    valid_neg: &[Triple],
) -> Result<ClassifierThresholds> {
    fit_thresholds_from_scores(&scored(model, valid_pos)?, &scored(model, valid_neg)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    /// Relations without a fitted threshold that used the pooled one.
    pub pooled_relations: Vec<RelationId>,
}

impl ClassificationReport {
    pub fn to_tsv(&self) -> String {
        format!(
            "metric\tvalue\naccuracy\t{}\nn_pos\t{}\nn_neg\t{}\npooled_relations\t{}\n",
            self.accuracy,
            self.n_pos,
            self.n_neg,
            self.pooled_relations.len()
        )
    }
}

pub fn classify_scores(
    thresholds: &ClassifierThresholds,
    pos: &[(RelationId, f64)],
    neg: &[(RelationId, f64)],
) -> ClassificationReport {
    let mut pooled = std::collections::BTreeSet::new();
    let mut correct = 0usize;
    for (&(r, s), label) in pos
        .iter()
        .map(|p| (p, true))
        .chain(neg.iter().map(|n| (n, false)))
    {
        let (th, fallback) = thresholds.threshold(r);
        if fallback {
            pooled.insert(r);
        }
        if (s < th) == label {
            correct += 1;
        }
    }
    let n = pos.len() + neg.len();
    ClassificationReport {
        accuracy: if n == 0 {
            0.0
        } else {
            correct as f64 / n as f64
        },
        n_pos: pos.len(),
        n_neg: neg.len(),
        pooled_relations: pooled.into_iter().collect(),
    }
}

/// Fraction of correct decisions over `test_pos ∪ test_neg`.
pub fn triple_classification(
    model: &EmbeddingModel,
    thresholds: &ClassifierThresholds,
    test_pos: &[Triple],
    test_neg: &[Triple],
) -> Result<ClassificationReport> {
    Ok(classify_scores(
        thresholds,
        &scored(model, test_pos)?,
        &scored(model, test_neg)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeMode {
    /// Replacement drawn from entities seen in the same argument position of
    /// the same relation.
    #[default]
    PositionCompatible,
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Negatives {
    pub triples: Vec<Triple>,
    /// Relations whose compatible pool was exhausted for some triple and fell
    /// back to uniform corruption.
    pub fallback_relations: Vec<RelationId>,
}

/// One negative per positive, none of them a correct triple.
///
/// Per triple: `gen_bool(0.5)` picks the head (true) or tail, then up to
/// `max_retries` draws from the relation's pool; on exhaustion the uniform
/// corruption is used instead.
pub fn make_negatives<R: Rng + ?Sized>(
    positives: &[Triple],
    graph: &KnowledgeGraph,
    rng: &mut R,
    mode: NegativeMode,
    max_retries: usize,
) -> Result<Negatives> {
    if positives.is_empty() {
        return Err(Error::Argument("no positive triples to corrupt".into()));
    }
    let mut fallback = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(positives.len());
    match mode {
        NegativeMode::Uniform => {
            for t in positives {
                out.push(corrupt(
                    t,
                    graph,
                    rng,
                    CorruptionMode::Uniform,
                    max_retries,
                )?);
            }
        }
        NegativeMode::PositionCompatible => {
            let mut pools: HashMap<RelationId, (Vec<EntityId>, Vec<EntityId>)> = HashMap::new();
            let mut sorted: Vec<&Triple> = graph.correct_set().iter().collect();
            sorted.sort_unstable();
            for t in sorted {
                let p = pools.entry(t.relation).or_default();
                p.0.push(t.head);
                p.1.push(t.tail);
            }
            for p in pools.values_mut() {
                p.0.sort_unstable();
                p.0.dedup();
                p.1.sort_unstable();
                p.1.dedup();
            }
            for t in positives {
                let position = if rng.gen_bool(0.5) {
                    Position::Head
                } else {
                    Position::Tail
                };
                let pool = pools.get(&t.relation).map(|p| match position {
                    Position::Head => &p.0,
                    Position::Tail => &p.1,
                });
                let mut found = None;
                if let Some(pool) = pool.filter(|p| !p.is_empty()) {
                    for _ in 0..max_retries.max(1) {
                        let cand = position.replace(*t, pool[rng.gen_range(0..pool.len())]);
                        if !graph.is_correct(&cand) {
                            found = Some(cand);
                            break;
                        }
                    }
                }
                match found {
                    Some(c) => out.push(c),
                    None => {
                        fallback.insert(t.relation);
                        out.push(corrupt(
                            t,
                            graph,
                            rng,
                            CorruptionMode::Uniform,
                            max_retries,
                        )?);
                    }
                }
            }
        }
    }
    Ok(Negatives {
        triples: out,
        fallback_relations: fallback.into_iter().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Splits, Vocab};
    use crate::model::Dissimilarity;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn graph(n_e: usize, train: Vec<Triple>, test: Vec<Triple>) -> KnowledgeGraph {
        KnowledgeGraph::new(
            Vocab::numeric(n_e),
            Vocab::numeric(1),
            Splits {
                train,
                test,
                ..Default::default()
            },
        )
        .unwrap()
    }

    /// Entities on a line with a zero relation: f(h, t) = |x_h − x_t|.
    fn line(xs: &[f64]) -> EmbeddingModel {
        EmbeddingModel::from_parts(1, Dissimilarity::L1, xs.to_vec(), vec![0.0]).unwrap()
    }

    #[test]
    fn dominant_truth_ranks_first() {
        let g = graph(3, vec![Triple::new(0, 0, 1)], vec![Triple::new(0, 0, 1)]);
        let t = Triple::new(0, 0, 1);
        // Relation +1. Tail scores: 0 -> 1, 1 -> 0 (truth), 2 -> 4.
        let m = EmbeddingModel::from_parts(1, Dissimilarity::L1, vec![0.0, 1.0, 5.0], vec![1.0])
            .unwrap();
        assert_eq!(rank_entity(&m, &t, Position::Tail, &g, false), 1.0);
        assert_eq!(rank_entity(&m, &t, Position::Tail, &g, true), 1.0);
        // Moving entity 2 onto entity 1 creates a two-way tie for first place.
        let m = EmbeddingModel::from_parts(1, Dissimilarity::L1, vec![0.0, 1.0, 1.0], vec![1.0])
            .unwrap();
        assert_eq!(rank_entity(&m, &t, Position::Tail, &g, false), 1.5);
    }

    #[test]
    fn filtered_competitor_is_removed() {
        // Test triple (0,0,2); (0,0,1) is a correct triple scoring better.
        let g = graph(3, vec![Triple::new(0, 0, 1)], vec![Triple::new(0, 0, 2)]);
        let m = line(&[0.0, 0.1, 0.2]);
        let t = Triple::new(0, 0, 2);
        let raw = rank_entity(&m, &t, Position::Tail, &g, false);
        let filt = rank_entity(&m, &t, Position::Tail, &g, true);
        // Tail candidates: 0 -> 0.0, 1 -> 0.1, 2 -> 0.2 (truth).
        assert_eq!(raw, 3.0);
        assert_eq!(filt, raw - 1.0);
    }

    #[test]
    fn tied_block_gets_mean_rank() {
        let g = graph(4, vec![Triple::new(0, 0, 1)], vec![Triple::new(0, 0, 1)]);
        // Tail scores: 0 -> 0.0, 1 -> 1.0 (truth), 2 -> 1.0, 3 -> 0.5.
        let m = line(&[1.0, 0.0, 2.0, 0.5]);
        // Better: {0, 3}; tied with truth: {2}. Block positions 3 and 4 -> mean 3.5.
        assert_eq!(
            rank_entity(&m, &Triple::new(0, 0, 1), Position::Tail, &g, false),
            3.5
        );
    }

    #[test]
    fn empty_test_split_is_an_error() {
        let g = graph(2, vec![Triple::new(0, 0, 1)], vec![]);
        assert!(link_prediction(&line(&[0.0, 1.0]), &g, &EvalOptions::default()).is_err());
    }

    #[test]
    fn perfect_model_has_mean_rank_one() {
        let test = vec![Triple::new(0, 0, 1)];
        let g = graph(3, vec![Triple::new(1, 0, 2)], test);
        // r = 1: 0 -> 1 exact, everything else strictly positive.
        let m = EmbeddingModel::from_parts(1, Dissimilarity::L1, vec![0.0, 1.0, 5.0], vec![1.0])
            .unwrap();
        let rep = link_prediction(&m, &g, &EvalOptions::default()).unwrap();
        assert_eq!(rep.raw_mean_rank, 1.0);
        assert_eq!(rep.filtered_mean_rank, 1.0);
        assert_eq!(rep.filtered_hits_at_k[&1], 1.0);
        assert!(rep.to_table().contains("filtered"));
    }

    #[test]
    fn vocab_mismatch_names_sizes() {
        let g = graph(3, vec![Triple::new(0, 0, 1)], vec![Triple::new(0, 0, 1)]);
        let err = link_prediction(&line(&[0.0, 1.0]), &g, &EvalOptions::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('2') && msg.contains('3'), "{msg}");
    }

    #[test]
    fn midpoint_threshold() {
        let t = best_threshold(&[(1.0, true), (3.0, false)]);
        assert_eq!(t.threshold, 2.0);
        assert_eq!(t.accuracy, 1.0);
    }

    #[test]
    fn infinite_threshold_classifies_everything_positive() {
        let th = ClassifierThresholds {
            per_relation: BTreeMap::from([(
                0,
                RelationThreshold {
                    threshold: f64::INFINITY,
                    accuracy: 0.0,
                    n_valid: 0,
                },
            )]),
            global: RelationThreshold {
                threshold: f64::INFINITY,
                accuracy: 0.0,
                n_valid: 0,
            },
            accuracy: 0.0,
        };
        let rep = classify_scores(&th, &[(0, 1.0), (0, 2.0), (0, 3.0)], &[(0, 0.5)]);
        assert_eq!(rep.accuracy, 0.75);
    }

    #[test]
    fn unseen_relation_uses_pooled_threshold() {
        let th = fit_thresholds_from_scores(&[(0, 1.0)], &[(0, 3.0)]).unwrap();
        let rep = classify_scores(&th, &[(5, 1.0)], &[(5, 4.0)]);
        assert_eq!(rep.pooled_relations, vec![5]);
        assert_eq!(rep.accuracy, 1.0);
    }

    #[test]
    fn identical_distributions_are_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draw = |rng: &mut ChaCha8Rng, n: usize| -> Vec<(RelationId, f64)> {
            (0..n).map(|_| (0, rng.gen::<f64>())).collect()
        };
        let (vp, vn) = (draw(&mut rng, 2000), draw(&mut rng, 2000));
        let th = fit_thresholds_from_scores(&vp, &vn).unwrap();
        let (tp, tn) = (draw(&mut rng, 5000), draw(&mut rng, 5000));
        let acc = classify_scores(&th, &tp, &tn).accuracy;
        assert!((acc - 0.5).abs() < 0.03, "{acc}");
    }

    #[test]
    fn negatives_avoid_correct_set_and_are_deterministic() {
        let train: Vec<Triple> = (0..20).map(|i| Triple::new(i, 0, (i + 1) % 20)).collect();
        let g = graph(20, train.clone(), vec![]);
        for mode in [NegativeMode::Uniform, NegativeMode::PositionCompatible] {
            let run = || {
                let mut rng = ChaCha8Rng::seed_from_u64(9);
                make_negatives(&train, &g, &mut rng, mode, 100).unwrap()
            };
            let a = run();
            assert_eq!(a, run());
            assert_eq!(a.triples.len(), train.len());
            assert!(a.triples.iter().all(|t| !g.is_correct(t)));
        }
    }

    #[test]
    fn exhausted_pool_falls_back_to_uniform() {
        // Relation 0 only ever has head 0 and tail 1.
        let g = graph(5, vec![Triple::new(0, 0, 1)], vec![]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let negs = make_negatives(
            &[Triple::new(0, 0, 1)],
            &g,
            &mut rng,
            NegativeMode::PositionCompatible,
            10,
        )
        .unwrap();
        assert_eq!(negs.fallback_relations, vec![0]);
        assert!(!g.is_correct(&negs.triples[0]));
    }
}
