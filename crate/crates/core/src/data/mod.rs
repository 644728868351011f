//! Triple datasets: vocabularies, splits, neighborhood indexes, negative
//! sampling and relation partitioning.

mod index;
mod io;
mod sample;

use std::collections::{HashMap, HashSet};

pub use index::{Neighborhood, NeighborhoodIndex};
pub use io::{load_graph, load_serialized, save_serialized, LoadOptions, TripleFormat};
pub use sample::{corrupt, partition, CorruptionMode, Partition, DEFAULT_MAX_RETRIES};

use crate::error::{Error, Result};

pub type EntityId = u32;
pub type RelationId = u32;

/// An integer-encoded `(head, relation, tail)` fact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub const fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }
}

/// Which argument of a triple is replaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Position {
    Head,
    Tail,
}

impl Position {
    pub fn replace(self, triple: Triple, entity: EntityId) -> Triple {
        match self {
            Position::Head => Triple {
                head: entity,
                ..triple
            },
            Position::Tail => Triple {
                tail: entity,
                ..triple
            },
        }
    }

    pub fn entity(self, triple: Triple) -> EntityId {
        match self {
            Position::Head => triple.head,
            Position::Tail => triple.tail,
        }
    }
}

/// Dense bidirectional name <-> id map. Ids are assigned in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Vocabulary whose names are the decimal ids `0..n`.
    pub fn numeric(n: usize) -> Self {
        let mut vocab = Vocab::new();
        for i in 0..n {
            vocab.intern(&i.to_string());
        }
        vocab
    }

    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocab::new();
        for name in names {
            let name = name.into();
            if vocab.ids.contains_key(&name) {
                return Err(Error::Validation(format!(
                    "duplicate vocabulary entry {name:?}"
                )));
            }
            vocab.intern(&name);
        }
        Ok(vocab)
    }

    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Vocabularies plus train/valid/test splits and the set of all correct
/// triples. Immutable after construction.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: Vocab,
    relations: Vocab,
    train: Vec<Triple>,
    valid: Vec<Triple>,
    test: Vec<Triple>,
    /// Labeled negatives shipped with some classification datasets.
    valid_neg: Vec<Triple>,
    test_neg: Vec<Triple>,
    correct: HashSet<Triple>,
}

/// The three positive splits plus optional labeled negatives.
#[derive(Debug, Clone, Default)]
pub struct Splits {
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub valid_neg: Vec<Triple>,
    pub test_neg: Vec<Triple>,
}

impl KnowledgeGraph {
    /// Builds a graph, dropping duplicate triples within each split.
    ///
    /// Fails if an id is outside its vocabulary or the training split is empty.
    pub fn new(entities: Vocab, relations: Vocab, splits: Splits) -> Result<Self> {
        let n_e = entities.len();
        let n_r = relations.len();
        let check = |t: &Triple| -> Result<()> {
            if (t.head as usize) >= n_e || (t.tail as usize) >= n_e {
                return Err(Error::Validation(format!(
                    "entity id out of range in {t:?} (|E| = {n_e})"
                )));
            }
            if (t.relation as usize) >= n_r {
                return Err(Error::Validation(format!(
                    "relation id out of range in {t:?} (|R| = {n_r})"
                )));
            }
            Ok(())
        };
        let Splits {
            train,
            valid,
            test,
            valid_neg,
            test_neg,
        } = splits;
        for t in train
            .iter()
            .chain(&valid)
            .chain(&test)
            .chain(&valid_neg)
            .chain(&test_neg)
        {
            check(t)?;
        }
        let train = dedup("train", train);
        if train.is_empty() {
            return Err(Error::Validation("training split is empty".into()));
        }
        let valid = dedup("valid", valid);
        let test = dedup("test", test);
        let correct: HashSet<Triple> = train.iter().chain(&valid).chain(&test).copied().collect();
        Ok(KnowledgeGraph {
            entities,
            relations,
            train,
            valid,
            test,
            valid_neg: dedup("valid negatives", valid_neg),
            test_neg: dedup("test negatives", test_neg),
            correct,
        })
    }

    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn relations(&self) -> &Vocab {
        &self.relations
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn train(&self) -> &[Triple] {
        &self.train
    }

    pub fn valid(&self) -> &[Triple] {
        &self.valid
    }

    pub fn test(&self) -> &[Triple] {
        &self.test
    }

    pub fn valid_negatives(&self) -> &[Triple] {
        &self.valid_neg
    }

    pub fn test_negatives(&self) -> &[Triple] {
        &self.test_neg
    }

    /// Whether the triple occurs in any split.
    pub fn is_correct(&self, triple: &Triple) -> bool {
        self.correct.contains(triple)
    }

    pub fn correct_set(&self) -> &HashSet<Triple> {
        &self.correct
    }

    /// One-line summary of the graph sizes.
    pub fn summary(&self) -> String {
        format!(
            "rels={} ents={} train={} valid={} test={}",
            self.num_relations(),
            self.num_entities(),
            self.train.len(),
            self.valid.len(),
            self.test.len()
        )
    }

    /// Returns the triple with names instead of ids.
    pub fn names_of(&self, t: &Triple) -> (&str, &str, &str) {
        (
            self.entities.name(t.head).unwrap_or("?"),
            self.relations.name(t.relation).unwrap_or("?"),
            self.entities.name(t.tail).unwrap_or("?"),
        )
    }
}

fn dedup(split: &str, triples: Vec<Triple>) -> Vec<Triple> {
    let mut seen = HashSet::with_capacity(triples.len());
    let before = triples.len();
    let out: Vec<Triple> = triples.into_iter().filter(|t| seen.insert(*t)).collect();
    if out.len() < before {
        log::warn!(
            "dropped {} duplicate triples from {split}",
            before - out.len()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(n: usize) -> Vocab {
        Vocab::numeric(n)
    }

    #[test]
    fn duplicates_are_dropped_and_correct_set_covers_splits() {
        let splits = Splits {
            train: vec![
                Triple::new(0, 0, 1),
                Triple::new(0, 0, 1),
                Triple::new(1, 0, 2),
            ],
            valid: vec![Triple::new(2, 0, 0)],
            test: vec![Triple::new(1, 0, 0)],
            ..Default::default()
        };
        let g = KnowledgeGraph::new(vocab(3), vocab(1), splits).unwrap();
        assert_eq!(g.train().len(), 2);
        for t in g.train().iter().chain(g.valid()).chain(g.test()) {
            assert!(g.is_correct(t));
        }
        assert_eq!(g.correct_set().len(), 4);
    }

    #[test]
    fn empty_train_is_rejected() {
        let err = KnowledgeGraph::new(vocab(2), vocab(1), Splits::default()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn out_of_range_ids_are_rejected() {
        let splits = Splits {
            train: vec![Triple::new(0, 1, 1)],
            ..Default::default()
        };
        assert!(KnowledgeGraph::new(vocab(2), vocab(1), splits).is_err());
    }

    #[test]
    fn vocab_ids_are_dense_in_insertion_order() {
        let mut v = Vocab::new();
        assert_eq!(v.intern("b"), 0);
        assert_eq!(v.intern("a"), 1);
        assert_eq!(v.intern("b"), 0);
        assert_eq!(v.name(1), Some("a"));
        assert_eq!(v.id("a"), Some(1));
        assert!(Vocab::from_names(["x", "x"]).is_err());
    }
}
