//! Locality-dependent margins.
//!
//! For an anchor entity `h` with relations `R_h`, the entity margin averages,
//! over `r ∈ R_h`, the smallest gap `| ‖h − t′‖ − ‖h − t‖ |` between a
//! positive neighbor `t ∈ P_r` and a negative neighbor `t′ ∈ N_r`. The
//! relation margin is the smallest excess norm of another relation of `h`
//! over `‖r‖`. The training margin mixes the two with weight `mu`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{EntityId, KnowledgeGraph, Neighborhood, NeighborhoodIndex, RelationId};
use crate::error::{Error, Result};
use crate::model::EmbeddingModel;

/// Sampling parameters for the active-set approximation of the entity margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActiveSetConfig {
    /// Share of `N_r` examined per round, in `(0, 1]`.
    pub fraction: f64,
    pub rounds: usize,
    pub rng_seed: u64,
}

impl Default for ActiveSetConfig {
    fn default() -> Self {
        ActiveSetConfig {
            fraction: 0.1,
            rounds: 5,
            rng_seed: 0,
        }
    }
}

impl ActiveSetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::Argument(format!(
                "active-set fraction must be in (0, 1], got {}",
                self.fraction
            )));
        }
        if self.rounds == 0 {
            return Err(Error::Argument("active-set rounds must be positive".into()));
        }
        Ok(())
    }

    /// Negatives drawn per round out of `n`; at least one when `n > 0`.
    pub fn sample_size(&self, n: usize) -> usize {
        if n == 0 {
            0
        } else {
            ((self.fraction * n as f64).ceil() as usize).clamp(1, n)
        }
    }
}

/// How entity margins are computed during a table refresh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MarginMethod {
    Exact,
    Active(ActiveSetConfig),
}

impl Default for MarginMethod {
    fn default() -> Self {
        MarginMethod::Active(ActiveSetConfig::default())
    }
}

/// Which neighborhood an entity margin is anchored on. Entities that never
/// occur as a head use their tail-side neighborhood.
fn anchor_side(index: &NeighborhoodIndex, h: EntityId) -> Result<&Neighborhood> {
    if index.heads().is_anchor(h) {
        Ok(index.heads())
    } else if index.tails().is_anchor(h) {
        Ok(index.tails())
    } else {
        Err(Error::UndefinedMargin(h))
    }
}

/// `min over (t, t′) of | d(t′) − d(t) |` given the two distance lists.
/// Zero when either list is empty.
fn min_cross_gap(pos: &[f64], neg: &[f64]) -> f64 {
    if pos.is_empty() || neg.is_empty() {
        return 0.0;
    }
    let mut p = pos.to_vec();
    let mut n = neg.to_vec();
    p.sort_unstable_by(f64::total_cmp);
    n.sort_unstable_by(f64::total_cmp);
    let (mut i, mut j) = (0, 0);
    let mut best = f64::INFINITY;
    while i < p.len() && j < n.len() {
        best = best.min((n[j] - p[i]).abs());
        if p[i] < n[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    best
}

/// The per-relation minimum gap for explicit positive and negative sets,
/// measured from `anchor`. Overlapping sets are allowed.
pub fn relation_gap(
    model: &EmbeddingModel,
    anchor: EntityId,
    positives: &[EntityId],
    negatives: &[EntityId],
) -> f64 {
    let dis = model.dissimilarity();
    let a = model.entity(anchor);
    let dp: Vec<f64> = positives
        .iter()
        .map(|&t| dis.distance(a, model.entity(t)))
        .collect();
    let dn: Vec<f64> = negatives
        .iter()
        .map(|&t| dis.distance(a, model.entity(t)))
        .collect();
    min_cross_gap(&dp, &dn)
}

/// Exact entity-specific margin. A relation with no negatives contributes 0
/// but still counts in the `nr_h` denominator.
pub fn entity_margin_exact(
    h: EntityId,
    index: &NeighborhoodIndex,
    model: &EmbeddingModel,
) -> Result<f64> {
    let side = anchor_side(index, h)?;
    let mut sum = 0.0;
    for r in side.relations(h) {
        let neg = side.negatives(h, r);
        sum += relation_gap(model, h, side.positives(h, r), &neg);
    }
    Ok(sum / side.relation_count(h) as f64)
}

/// Draws `k` of `candidates` without replacement, favoring those close to
/// `center`: weights `exp(−‖center − c‖)` via Gumbel top-k.
fn sample_near<R: Rng>(
    model: &EmbeddingModel,
    center: EntityId,
    candidates: &[EntityId],
    k: usize,
    rng: &mut R,
) -> Vec<EntityId> {
    if k >= candidates.len() {
        return candidates.to_vec();
    }
    let dis = model.dissimilarity();
    let c = model.entity(center);
    let mut keyed: Vec<(f64, EntityId)> = candidates
        .iter()
        .map(|&e| {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let gumbel = -(-u.ln()).ln();
            (-dis.distance(c, model.entity(e)) + gumbel, e)
        })
        .collect();
    keyed.select_nth_unstable_by(k - 1, |a, b| b.0.total_cmp(&a.0));
    keyed.truncate(k);
    keyed.into_iter().map(|(_, e)| e).collect()
}

/// Per-entity generator for the active-set rounds, independent of the order
/// in which entities are processed.
fn entity_rng(seed: u64, h: EntityId) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (u64::from(h) + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Active-set approximation of [`entity_margin_exact`].
///
/// Each round, for each relation, the farthest positive `t*` is found
/// exactly, `⌈fraction·|N_r|⌉` negatives are sampled with preference for
/// those near `t*`, and the minimum gap over positives × sample is taken.
/// Per-relation minima are averaged over rounds and then over relations.
/// With `fraction = 1` the whole of `N_r` is used and the result equals the
/// exact margin.
pub fn entity_margin_active(
    h: EntityId,
    index: &NeighborhoodIndex,
    model: &EmbeddingModel,
    cfg: &ActiveSetConfig,
) -> Result<f64> {
    cfg.validate()?;
    let side = anchor_side(index, h)?;
    let mut rng = entity_rng(cfg.rng_seed, h);
    let dis = model.dissimilarity();
    let a = model.entity(h);

    let groups: Vec<(&[EntityId], Vec<EntityId>, EntityId)> = side
        .relations(h)
        .map(|r| {
            let pos = side.positives(h, r);
            let farthest = pos
                .iter()
                .copied()
                .map(|t| (dis.distance(a, model.entity(t)), t))
                .fold((f64::NEG_INFINITY, pos[0]), |best, cur| {
                    if cur.0 > best.0 {
                        cur
                    } else {
                        best
                    }
                })
                .1;
            (pos, side.negatives(h, r), farthest)
        })
        .collect();

    let mut per_relation = vec![0.0; groups.len()];
    for _ in 0..cfg.rounds {
        for (acc, (pos, neg, farthest)) in per_relation.iter_mut().zip(&groups) {
            if neg.is_empty() {
                continue;
            }
            let sample = sample_near(model, *farthest, neg, cfg.sample_size(neg.len()), &mut rng);
            *acc += relation_gap(model, h, pos, &sample);
        }
    }
    let rounds = cfg.rounds as f64;
    let mut sum = 0.0;
    for acc in per_relation {
        sum += acc / rounds;
    }
    Ok(sum / groups.len() as f64)
}

/// Relation-specific margin of `(h, r)`: the smallest `‖r_i‖ − ‖r‖` over the
/// other relations `r_i` of `h` with `‖r_i‖ ≥ ‖r‖`, or 0 when there is none.
pub fn relation_margin(
    h: EntityId,
    r: RelationId,
    index: &NeighborhoodIndex,
    model: &EmbeddingModel,
) -> Result<f64> {
    let side = index.heads();
    if !side.has_relation(h, r) {
        return Err(Error::Argument(format!(
            "relation {r} is not a relation of entity {h}"
        )));
    }
    let dis = model.dissimilarity();
    let norm_r = dis.norm(model.relation(r));
    let best = side
        .relations(h)
        .filter(|&ri| ri != r)
        .map(|ri| dis.norm(model.relation(ri)) - norm_r)
        .filter(|&gap| gap >= 0.0)
        .fold(f64::INFINITY, f64::min);
    Ok(if best.is_finite() { best } else { 0.0 })
}

/// `mu · m_ent + (1 − mu) · m_rel`.
pub fn combine(mu: f64, m_ent: f64, m_rel: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::Argument(format!("mu must be in [0, 1], got {mu}")));
    }
    Ok(mu * m_ent + (1.0 - mu) * m_rel)
}

/// Combined margin of `(h, r)` computed from the current embeddings.
pub fn combined_margin(
    h: EntityId,
    r: RelationId,
    mu: f64,
    index: &NeighborhoodIndex,
    model: &EmbeddingModel,
    method: &MarginMethod,
) -> Result<f64> {
    let m_ent = match method {
        MarginMethod::Exact => entity_margin_exact(h, index, model)?,
        MarginMethod::Active(cfg) => entity_margin_active(h, index, model, cfg)?,
    };
    combine(mu, m_ent, relation_margin(h, r, index, model)?)
}

/// Cached margins for every training entity and `(head, relation)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginTable {
    m_ent: HashMap<EntityId, f64>,
    pairs: HashMap<(EntityId, RelationId), (f64, f64)>,
    mu: f64,
    method: MarginMethod,
    epoch_computed: usize,
}

/// Aggregate view of a table for reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginSummary {
    pub mu: f64,
    pub epoch_computed: usize,
    pub entities: usize,
    pub pairs: usize,
    pub mean_m_ent: f64,
    pub mean_m_rel: f64,
    pub mean_m_opt: f64,
    pub max_m_opt: f64,
}

impl MarginTable {
    pub fn m_ent(&self, e: EntityId) -> Option<f64> {
        self.m_ent.get(&e).copied()
    }

    pub fn m_rel(&self, h: EntityId, r: RelationId) -> Option<f64> {
        self.pairs.get(&(h, r)).map(|p| p.0)
    }

    pub fn m_opt(&self, h: EntityId, r: RelationId) -> Option<f64> {
        self.pairs.get(&(h, r)).map(|p| p.1)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn method(&self) -> MarginMethod {
        self.method
    }

    pub fn epoch_computed(&self) -> usize {
        self.epoch_computed
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Sorted `(entity, m_ent)` entries.
    pub fn entity_entries(&self) -> Vec<(EntityId, f64)> {
        let mut v: Vec<_> = self.m_ent.iter().map(|(&e, &m)| (e, m)).collect();
        v.sort_unstable_by_key(|e| e.0);
        v
    }

    /// Sorted `(head, relation, m_rel, m_opt)` entries.
    pub fn pair_entries(&self) -> Vec<(EntityId, RelationId, f64, f64)> {
        let mut v: Vec<_> = self
            .pairs
            .iter()
            .map(|(&(h, r), &(rel, opt))| (h, r, rel, opt))
            .collect();
        v.sort_unstable_by_key(|e| (e.0, e.1));
        v
    }

    pub fn mean_m_opt(&self) -> f64 {
        if self.pairs.is_empty() {
            return 0.0;
        }
        self.pair_entries().iter().map(|p| p.3).sum::<f64>() / self.pairs.len() as f64
    }

    pub fn summary(&self) -> MarginSummary {
        let pairs = self.pair_entries();
        let ents = self.entity_entries();
        let mean = |xs: &mut dyn Iterator<Item = f64>, n: usize| {
            if n == 0 {
                0.0
            } else {
                xs.sum::<f64>() / n as f64
            }
        };
        MarginSummary {
            mu: self.mu,
            epoch_computed: self.epoch_computed,
            entities: ents.len(),
            pairs: pairs.len(),
            mean_m_ent: mean(&mut ents.iter().map(|e| e.1), ents.len()),
            mean_m_rel: mean(&mut pairs.iter().map(|p| p.2), pairs.len()),
            mean_m_opt: mean(&mut pairs.iter().map(|p| p.3), pairs.len()),
            max_m_opt: pairs.iter().map(|p| p.3).fold(0.0, f64::max),
        }
    }

    /// Writes `entity<TAB>m_ent` and `entity<TAB>relation<TAB>m_rel<TAB>m_opt`
    /// files using the graph's names.
    pub fn export_tsv(
        &self,
        graph: &KnowledgeGraph,
        entity_path: &Path,
        pair_path: &Path,
    ) -> Result<()> {
        let ename = |e: EntityId| graph.entities().name(e).unwrap_or("?").to_owned();
        let write = |path: &Path, rows: Vec<String>| -> Result<()> {
            let ctx = || format!("writing {}", path.display());
            let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(ctx(), e))?);
            for row in rows {
                writeln!(w, "{row}").map_err(|e| Error::io(ctx(), e))?;
            }
            w.flush().map_err(|e| Error::io(ctx(), e))
        };
        write(
            entity_path,
            self.entity_entries()
                .into_iter()
                .map(|(e, m)| format!("{}\t{m}", ename(e)))
                .collect(),
        )?;
        write(
            pair_path,
            self.pair_entries()
                .into_iter()
                .map(|(h, r, rel, opt)| {
                    format!(
                        "{}\t{}\t{rel}\t{opt}",
                        ename(h),
                        graph.relations().name(r).unwrap_or("?")
                    )
                })
                .collect(),
        )
    }
}

/// Recomputes every margin from the current embeddings.
///
/// Entities are processed in parallel on the current rayon pool; each one
/// draws from its own seeded generator so the table does not depend on the
/// thread count.
pub fn refresh_table(
    graph: &KnowledgeGraph,
    index: &NeighborhoodIndex,
    model: &EmbeddingModel,
    mu: f64,
    method: &MarginMethod,
    epoch: usize,
) -> Result<MarginTable> {
    combine(mu, 0.0, 0.0)?;
    if let MarginMethod::Active(cfg) = method {
        cfg.validate()?;
    }
    let dis = model.dissimilarity();
    let rel_norms: Vec<f64> = (0..model.num_relations() as RelationId)
        .map(|r| dis.norm(model.relation(r)))
        .collect();

    type Row = (EntityId, f64, Vec<(RelationId, f64, f64)>);
    let rows: Vec<Result<Option<Row>>> = (0..graph.num_entities() as EntityId)
        .into_par_iter()
        .map(|e| {
            if anchor_side(index, e).is_err() {
                return Ok(None);
            }
            let m_ent = match method {
                MarginMethod::Exact => entity_margin_exact(e, index, model)?,
                MarginMethod::Active(cfg) => entity_margin_active(e, index, model, cfg)?,
            };
            let rels: Vec<RelationId> = index.heads().relations(e).collect();
            let pairs = rels
                .iter()
                .map(|&r| {
                    let m_rel = rels
                        .iter()
                        .filter(|&&ri| ri != r)
                        .map(|&ri| rel_norms[ri as usize] - rel_norms[r as usize])
                        .filter(|&gap| gap >= 0.0)
                        .fold(f64::INFINITY, f64::min);
                    let m_rel = if m_rel.is_finite() { m_rel } else { 0.0 };
                    (r, m_rel, mu * m_ent + (1.0 - mu) * m_rel)
                })
                .collect();
            Ok(Some((e, m_ent, pairs)))
        })
        .collect();

    let mut table = MarginTable {
        m_ent: HashMap::new(),
        pairs: HashMap::new(),
        mu,
        method: *method,
        epoch_computed: epoch,
    };
    for row in rows {
        if let Some((e, m_ent, pairs)) = row? {
            table.m_ent.insert(e, m_ent);
            for (r, m_rel, m_opt) in pairs {
                table.pairs.insert((e, r), (m_rel, m_opt));
            }
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Triple;
    use crate::model::Dissimilarity;

    /// h = 0 at the origin; tails 1, 2 via relation 0 at distances 1 and 2;
    /// tail 3 via relation 1 at distance 5.
    fn two_relation_fixture() -> (NeighborhoodIndex, EmbeddingModel) {
        let triples = [
            Triple::new(0, 0, 1),
            Triple::new(0, 0, 2),
            Triple::new(0, 1, 3),
        ];
        let index = NeighborhoodIndex::from_triples(4, &triples);
        let ents = vec![0.0, 0.0, 1.0, 0.0, 2.0, 0.0, 5.0, 0.0];
        let model = EmbeddingModel::from_parts(2, Dissimilarity::L2, ents, vec![0.0; 4]).unwrap();
        (index, model)
    }

    #[test]
    fn exact_two_relation_example() {
        let (index, model) = two_relation_fixture();
        assert_eq!(entity_margin_exact(0, &index, &model).unwrap(), 3.0);
    }

    #[test]
    fn no_negatives_gives_zero() {
        let index =
            NeighborhoodIndex::from_triples(3, &[Triple::new(0, 0, 1), Triple::new(0, 0, 2)]);
        let model = EmbeddingModel::init(3, 1, 4, Dissimilarity::L1, 1).unwrap();
        assert_eq!(entity_margin_exact(0, &index, &model).unwrap(), 0.0);
        let cfg = ActiveSetConfig::default();
        assert_eq!(entity_margin_active(0, &index, &model, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn overlapping_sets_give_zero_gap() {
        let model = EmbeddingModel::init(3, 1, 4, Dissimilarity::L2, 1).unwrap();
        assert_eq!(relation_gap(&model, 0, &[1], &[1]), 0.0);
    }

    #[test]
    fn unanchored_entity_is_an_error() {
        let (index, model) = two_relation_fixture();
        let index5 = NeighborhoodIndex::from_triples(5, &[Triple::new(0, 0, 1)]);
        assert!(matches!(
            entity_margin_exact(4, &index5, &model),
            Err(Error::UndefinedMargin(4))
        ));
        // Tail-only entities use the mirrored neighborhood.
        assert_eq!(entity_margin_exact(3, &index, &model).unwrap(), 0.0);
    }

    #[test]
    fn full_active_set_matches_exact() {
        let (index, model) = two_relation_fixture();
        let cfg = ActiveSetConfig {
            fraction: 1.0,
            rounds: 1,
            rng_seed: 5,
        };
        assert_eq!(
            entity_margin_active(0, &index, &model, &cfg).unwrap(),
            entity_margin_exact(0, &index, &model).unwrap()
        );
    }

    #[test]
    fn half_active_set_is_close() {
        let (index, model) = two_relation_fixture();
        let cfg = ActiveSetConfig {
            fraction: 0.5,
            rounds: 10,
            rng_seed: 17,
        };
        let got = entity_margin_active(0, &index, &model, &cfg).unwrap();
        assert!((got - 3.0).abs() / 3.0 <= 0.2, "{got}");
    }

    fn with_relation_norms(norms: &[f64]) -> (NeighborhoodIndex, EmbeddingModel) {
        let triples: Vec<Triple> = (0..norms.len() as u32)
            .map(|r| Triple::new(0, r, r + 1))
            .collect();
        let index = NeighborhoodIndex::from_triples(norms.len() + 1, &triples);
        let rels = norms.iter().flat_map(|&n| [n, 0.0]).collect();
        let model = EmbeddingModel::from_parts(
            2,
            Dissimilarity::L2,
            vec![0.0; 2 * (norms.len() + 1)],
            rels,
        )
        .unwrap();
        (index, model)
    }

    #[test]
    fn relation_margin_examples() {
        let (index, model) = with_relation_norms(&[1.0, 0.5, 1.2, 2.0]);
        assert!((relation_margin(0, 0, &index, &model).unwrap() - 0.2).abs() < 1e-15);
        // norm 2.0 is the largest.
        assert_eq!(relation_margin(0, 3, &index, &model).unwrap(), 0.0);

        let (single, m1) = with_relation_norms(&[1.0]);
        assert_eq!(relation_margin(0, 0, &single, &m1).unwrap(), 0.0);
        assert!(matches!(
            relation_margin(0, 7, &single, &m1),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn combine_examples() {
        assert!((combine(0.5, 3.0, 0.2).unwrap() - 1.6).abs() < 1e-15);
        assert_eq!(combine(1.0, 3.0, 0.2).unwrap(), 3.0);
        assert_eq!(combine(0.0, 3.0, 0.2).unwrap(), 0.2);
        assert!(combine(1.5, 1.0, 1.0).is_err());
        assert!(combine(-0.1, 1.0, 1.0).is_err());
    }

    #[test]
    fn sample_size_rounds_up() {
        let cfg = ActiveSetConfig {
            fraction: 0.1,
            rounds: 1,
            rng_seed: 0,
        };
        assert_eq!(cfg.sample_size(0), 0);
        assert_eq!(cfg.sample_size(1), 1);
        assert_eq!(cfg.sample_size(11), 2);
        assert!(ActiveSetConfig {
            fraction: 0.0,
            ..cfg
        }
        .validate()
        .is_err());
        assert!(ActiveSetConfig { rounds: 0, ..cfg }.validate().is_err());
    }
}
