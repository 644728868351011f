//! Shared fixtures for the benchmarks: planted-translation graphs of a few
//! sizes and randomly initialized models that match them.

use transa_core::synth::{planted_translation, SynthConfig};
use transa_core::{Dissimilarity, EmbeddingModel, KnowledgeGraph};

/// A benchmark workload: a graph and a model sized for it.
pub struct Fixture {
    pub graph: KnowledgeGraph,
    pub model: EmbeddingModel,
}

/// Builds a planted graph with `entities` entities and roughly ten triples
/// per entity, plus a model of dimension `dim`.
pub fn fixture(entities: usize, dim: usize, dissimilarity: Dissimilarity) -> Fixture {
    let graph = planted_translation(&SynthConfig {
        entities,
        relations: 10,
        triples: entities * 10,
        seed: 1,
        ..Default::default()
    })
    .expect("planted graph");
    let model = EmbeddingModel::init(
        graph.num_entities(),
        graph.num_relations(),
        dim,
        dissimilarity,
        2,
    )
    .expect("model init");
    Fixture { graph, model }
}
