use rand::seq::SliceRandom;
use rand::Rng;

use super::{KnowledgeGraph, Position, RelationId, Splits, Triple, Vocab};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_RETRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorruptionMode {
    /// Head or tail with probability 1/2, replacement uniform over all entities.
    #[default]
    Uniform,
}

/// Replaces the head or the tail of `triple` with a random entity, resampling
/// until the result is not a correct triple.
///
/// Each attempt draws `gen_bool(0.5)` (true replaces the head) followed by
/// `gen_range(0..|E|)`.
pub fn corrupt<R: Rng + ?Sized>(
    triple: &Triple,
    graph: &KnowledgeGraph,
    rng: &mut R,
    mode: CorruptionMode,
    max_retries: usize,
) -> Result<Triple> {
    let CorruptionMode::Uniform = mode;
    let n = graph.num_entities() as u32;
    for _ in 0..max_retries.max(1) {
        let position = if rng.gen_bool(0.5) {
            Position::Head
        } else {
            Position::Tail
        };
        let candidate = position.replace(*triple, rng.gen_range(0..n));
        if !graph.is_correct(&candidate) {
            return Ok(candidate);
        }
    }
    Err(Error::CorruptionExhausted {
        head: triple.head,
        relation: triple.relation,
        tail: triple.tail,
        attempts: max_retries.max(1),
    })
}

/// One relation group of a partition, with its own re-indexed graph.
#[derive(Debug, Clone)]
pub struct Partition {
    /// Relation ids in the source graph, ascending.
    pub source_relations: Vec<RelationId>,
    pub graph: KnowledgeGraph,
}

/// Shuffles the relations and splits them into `k` groups whose sizes differ
/// by at most one. Each group becomes a graph holding exactly the triples of
/// its relations, with entity ids rebuilt in first-appearance order.
pub fn partition<R: Rng + ?Sized>(
    graph: &KnowledgeGraph,
    k: usize,
    rng: &mut R,
) -> Result<Vec<Partition>> {
    let n_r = graph.num_relations();
    if k == 0 || k > n_r {
        return Err(Error::Argument(format!(
            "partition count must be in 1..={n_r}, got {k}"
        )));
    }
    let mut order: Vec<RelationId> = (0..n_r as RelationId).collect();
    order.shuffle(rng);

    let base = n_r / k;
    let extra = n_r % k;
    let mut group_of = vec![0usize; n_r];
    let mut groups = Vec::with_capacity(k);
    let mut start = 0;
    for g in 0..k {
        let size = base + usize::from(g < extra);
        let mut rels = order[start..start + size].to_vec();
        rels.sort_unstable();
        for &r in &rels {
            group_of[r as usize] = g;
        }
        groups.push(rels);
        start += size;
    }

    groups
        .into_iter()
        .enumerate()
        .map(|(g, rels)| subgraph(graph, g, &group_of, rels))
        .collect()
}

fn subgraph(
    graph: &KnowledgeGraph,
    group: usize,
    group_of: &[usize],
    rels: Vec<RelationId>,
) -> Result<Partition> {
    let mut rel_map = vec![u32::MAX; graph.num_relations()];
    let mut relations = Vocab::new();
    for &r in &rels {
        rel_map[r as usize] = relations.intern(graph.relations().name(r).unwrap_or_default());
    }
    let mut entities = Vocab::new();
    let mut remap = |split: &[Triple]| -> Vec<Triple> {
        split
            .iter()
            .filter(|t| group_of[t.relation as usize] == group)
            .map(|t| {
                let h = entities.intern(graph.entities().name(t.head).unwrap_or_default());
                let tl = entities.intern(graph.entities().name(t.tail).unwrap_or_default());
                Triple::new(h, rel_map[t.relation as usize], tl)
            })
            .collect()
    };
    let splits = Splits {
        train: remap(graph.train()),
        valid: remap(graph.valid()),
        test: remap(graph.test()),
        valid_neg: remap(graph.valid_negatives()),
        test_neg: remap(graph.test_negatives()),
    };
    let graph = KnowledgeGraph::new(entities, relations, splits).map_err(|e| match e {
        Error::Validation(msg) => Error::Validation(format!("partition {}: {msg}", group + 1)),
        other => other,
    })?;
    Ok(Partition {
        source_relations: rels,
        graph,
    })
}
