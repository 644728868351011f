//! Synthetic graphs with a planted translation structure.
//!
//! Every entity gets a latent point `z_e` and every relation a latent offset
//! `ρ_r`; the tail of `(h, r)` is the entity nearest to `z_h + ρ_r` other than
//! `h` itself. A translation model of sufficient dimension can fit such a
//! graph exactly, which makes it a useful learning-signal fixture.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{KnowledgeGraph, Splits, Triple, Vocab};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub entities: usize,
    pub relations: usize,
    /// Number of `(h, r)` pairs kept; at most `entities · relations`.
    pub triples: usize,
    pub latent_dim: usize,
    pub valid_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            entities: 200,
            relations: 10,
            triples: 2000,
            latent_dim: 8,
            valid_fraction: 0.1,
            test_fraction: 0.1,
            seed: 0,
        }
    }
}

/// Generates a planted-translation graph with numeric vocabularies.
pub fn planted_translation(cfg: &SynthConfig) -> Result<KnowledgeGraph> {
    if cfg.entities < 2 || cfg.relations == 0 || cfg.latent_dim == 0 {
        return Err(Error::Argument(
            "need at least 2 entities, 1 relation and a positive latent dimension".into(),
        ));
    }
    let pairs = cfg.entities * cfg.relations;
    if cfg.triples == 0 || cfg.triples > pairs {
        return Err(Error::Argument(format!(
            "triples must be in 1..={pairs}, got {}",
            cfg.triples
        )));
    }
    let held_out = cfg.valid_fraction + cfg.test_fraction;
    if !(cfg.valid_fraction >= 0.0 && cfg.test_fraction >= 0.0 && held_out < 1.0) {
        return Err(Error::Argument(
            "split fractions must be non-negative and sum below 1".into(),
        ));
    }

    let k = cfg.latent_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let z: Vec<f64> = (0..cfg.entities * k)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let rho: Vec<f64> = (0..cfg.relations * k)
        .map(|_| rng.gen_range(-0.5..0.5))
        .collect();

    let tail_of = |h: usize, r: usize| -> usize {
        let target: Vec<f64> = (0..k).map(|i| z[h * k + i] + rho[r * k + i]).collect();
        (0..cfg.entities)
            .filter(|&e| e != h)
            .map(|e| {
                let d: f64 = (0..k).map(|i| (z[e * k + i] - target[i]).powi(2)).sum();
                (e, d)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(e, _)| e)
            .expect("at least two entities")
    };

    let mut all: Vec<(usize, usize)> = (0..cfg.entities)
        .flat_map(|h| (0..cfg.relations).map(move |r| (h, r)))
        .collect();
    all.shuffle(&mut rng);
    all.truncate(cfg.triples);
    let triples: Vec<Triple> = all
        .into_iter()
        .map(|(h, r)| Triple::new(h as u32, r as u32, tail_of(h, r) as u32))
        .collect();

    let n = triples.len();
    let n_test = (cfg.test_fraction * n as f64).round() as usize;
    let n_valid = (cfg.valid_fraction * n as f64).round() as usize;
    let n_train = n - n_test - n_valid;
    let splits = Splits {
        train: triples[..n_train].to_vec(),
        valid: triples[n_train..n_train + n_valid].to_vec(),
        test: triples[n_train + n_valid..].to_vec(),
        ..Default::default()
    };
    KnowledgeGraph::new(
        Vocab::numeric(cfg.entities),
        Vocab::numeric(cfg.relations),
        splits,
    )
}
