//! Deterministic fixture generators shared by the benchmark targets.

use std::collections::BTreeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use synthrec::graph::{build_graph, ItemGraph, WeightSource};
use synthrec::ingest::{Session, SessionizedLog};
use synthrec::rules::{mine_pairwise_rules, RuleSet, Window};
use synthrec::tokenizer::EmbeddingMatrix;

/// Random session log over `n_items` items.
pub fn synthetic_log(n_users: usize, n_items: usize, seed: u64) -> SessionizedLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vocab = BTreeSet::new();
    let mut sessions = Vec::with_capacity(n_users);
    for u in 0..n_users {
        let len = rng.random_range(3..12);
        let items: Vec<String> = (0..len)
            .map(|_| format!("item{:04}", rng.random_range(0..n_items)))
            .collect();
        for item in &items {
            vocab.insert(item.clone());
        }
        sessions.push(Session { user: format!("u{u}"), items });
    }
    SessionizedLog { sessions, vocab, gap_threshold_ms: 1 }
}

/// Rules plus graph mined from a synthetic log.
pub fn synthetic_graph(n_users: usize, n_items: usize, seed: u64) -> (RuleSet, ItemGraph) {
    let log = synthetic_log(n_users, n_items, seed);
    let rules = mine_pairwise_rules(&log, 2, Window::WholeSession).expect("mine");
    let (graph, _) = build_graph(&rules, WeightSource::Confidence).expect("graph");
    (rules, graph)
}

/// Clustered embeddings: `clusters` centers with `per_cluster` noisy copies.
pub fn clustered_embeddings(
    clusters: usize,
    per_cluster: usize,
    dim: usize,
    seed: u64,
) -> EmbeddingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..clusters)
        .map(|_| (0..dim).map(|_| (rng.random::<f64>() - 0.5) * 20.0).collect())
        .collect();
    let mut data = Vec::with_capacity(clusters * per_cluster * dim);
    for c in &centers {
        for _ in 0..per_cluster {
            for &cd in c {
                data.push(cd + rng.random::<f64>() - 0.5);
            }
        }
    }
    EmbeddingMatrix::new(clusters * per_cluster, dim, data).expect("embeddings")
}

/// Power-law count vector for the gini benchmark.
pub fn powerlaw_counts(n: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let base = 1_000_000.0 / (i as f64 + 1.0);
            (base * (0.5 + rng.random::<f64>())) as u64
        })
        .collect()
}
