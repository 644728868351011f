use std::ops::Range;

use super::{EntityId, KnowledgeGraph, RelationId, Triple};

/// Adjacency of one anchor side (heads looking at tails, or tails looking at
/// heads) in compressed row form.
#[derive(Debug, Clone, Default)]
pub struct Neighborhood {
    /// Per anchor: range into `groups`.
    group_offsets: Vec<usize>,
    /// `(relation, range into others)`, sorted by relation within an anchor.
    groups: Vec<(RelationId, Range<usize>)>,
    /// Other endpoints, sorted within each group.
    others: Vec<EntityId>,
    /// Per anchor: range into `distinct`.
    distinct_offsets: Vec<usize>,
    /// Distinct neighbors of each anchor over all relations, sorted.
    distinct: Vec<EntityId>,
}

impl Neighborhood {
    fn build(n_entities: usize, mut edges: Vec<(EntityId, RelationId, EntityId)>) -> Self {
        edges.sort_unstable();
        edges.dedup();
        let mut nb = Neighborhood {
            group_offsets: Vec::with_capacity(n_entities + 1),
            distinct_offsets: Vec::with_capacity(n_entities + 1),
            others: edges.iter().map(|e| e.2).collect(),
            ..Default::default()
        };
        let mut i = 0;
        let mut scratch = Vec::new();
        for anchor in 0..n_entities as EntityId {
            nb.group_offsets.push(nb.groups.len());
            nb.distinct_offsets.push(nb.distinct.len());
            let start = i;
            while i < edges.len() && edges[i].0 == anchor {
                let rel = edges[i].1;
                let g_start = i;
                while i < edges.len() && edges[i].0 == anchor && edges[i].1 == rel {
                    i += 1;
                }
                nb.groups.push((rel, g_start..i));
            }
            scratch.clear();
            scratch.extend(edges[start..i].iter().map(|e| e.2));
            scratch.sort_unstable();
            scratch.dedup();
            nb.distinct.extend_from_slice(&scratch);
        }
        nb.group_offsets.push(nb.groups.len());
        nb.distinct_offsets.push(nb.distinct.len());
        nb
    }

    fn groups_of(&self, anchor: EntityId) -> &[(RelationId, Range<usize>)] {
        let a = anchor as usize;
        if a + 1 >= self.group_offsets.len() {
            return &[];
        }
        &self.groups[self.group_offsets[a]..self.group_offsets[a + 1]]
    }

    /// Whether the entity is an anchor of at least one training triple.
    pub fn is_anchor(&self, anchor: EntityId) -> bool {
        !self.groups_of(anchor).is_empty()
    }

    /// The relations `R_h` touching the anchor, sorted.
    pub fn relations(&self, anchor: EntityId) -> impl ExactSizeIterator<Item = RelationId> + '_ {
        self.groups_of(anchor).iter().map(|g| g.0)
    }

    /// `nr_h = |R_h|`.
    pub fn relation_count(&self, anchor: EntityId) -> usize {
        self.groups_of(anchor).len()
    }

    pub fn has_relation(&self, anchor: EntityId, relation: RelationId) -> bool {
        self.groups_of(anchor)
            .binary_search_by_key(&relation, |g| g.0)
            .is_ok()
    }

    /// `P_r`: entities linked to the anchor by `relation`, sorted.
    pub fn positives(&self, anchor: EntityId, relation: RelationId) -> &[EntityId] {
        let groups = self.groups_of(anchor);
        match groups.binary_search_by_key(&relation, |g| g.0) {
            Ok(i) => &self.others[groups[i].1.clone()],
            Err(_) => &[],
        }
    }

    /// All distinct neighbors of the anchor regardless of relation, sorted.
    pub fn neighbors(&self, anchor: EntityId) -> &[EntityId] {
        let a = anchor as usize;
        if a + 1 >= self.distinct_offsets.len() {
            return &[];
        }
        &self.distinct[self.distinct_offsets[a]..self.distinct_offsets[a + 1]]
    }

    /// `N_r`: neighbors reached through some other relation that are not
    /// already linked through `relation`. Computed on demand.
    pub fn negatives(&self, anchor: EntityId, relation: RelationId) -> Vec<EntityId> {
        let pos = self.positives(anchor, relation);
        let mut out = Vec::new();
        let mut j = 0;
        for &e in self.neighbors(anchor) {
            while j < pos.len() && pos[j] < e {
                j += 1;
            }
            if j < pos.len() && pos[j] == e {
                continue;
            }
            out.push(e);
        }
        out
    }
}

/// Per-entity positive and negative neighbor sets derived from the training
/// split, for both head and tail anchors.
#[derive(Debug, Clone)]
pub struct NeighborhoodIndex {
    heads: Neighborhood,
    tails: Neighborhood,
}

impl NeighborhoodIndex {
    pub fn build(graph: &KnowledgeGraph) -> Self {
        Self::from_triples(graph.num_entities(), graph.train())
    }

    pub fn from_triples(n_entities: usize, triples: &[Triple]) -> Self {
        let heads = triples
            .iter()
            .map(|t| (t.head, t.relation, t.tail))
            .collect();
        let tails = triples
            .iter()
            .map(|t| (t.tail, t.relation, t.head))
            .collect();
        NeighborhoodIndex {
            heads: Neighborhood::build(n_entities, heads),
            tails: Neighborhood::build(n_entities, tails),
        }
    }

    /// Heads as anchors: `positives(h, r)` are tails.
    pub fn heads(&self) -> &Neighborhood {
        &self.heads
    }

    /// Tails as anchors: `positives(t, r)` are heads.
    pub fn tails(&self) -> &Neighborhood {
        &self.tails
    }
}
