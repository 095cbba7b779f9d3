//! Fidelity metrics for walk corpora: popularity Gini, token Gini,
//! geometric mean lift, lengths and coverage.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ItemGraph;
use crate::rules::RuleSet;
use crate::tokenizer::SemanticIdMap;
use crate::walks::Walk;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub mean_length: f64,
    pub unique_items: u64,
    pub item_gini: f64,
    pub token_gini: f64,
    pub geom_lift: f64,
    pub n_walks: u64,
}

/// Gini coefficient of a count vector.
///
/// Production path uses the sorted-form identity
/// `G = 2 * sum(i * x_(i)) / (n * sum(x)) - (n + 1) / n` with 1-based ranks
/// over ascending-sorted counts; it equals the pairwise
/// `sum |x_i - x_j| / (2 n sum(x))` exactly. 0 means uniform; maximal
/// concentration approaches `1 - 1/n`.
pub fn gini(counts: &[u64]) -> Result<f64> {
    if counts.is_empty() {
        return Err(Error::EmptyInput("gini of an empty vector".into()));
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::InvalidInput("gini of an all-zero vector".into()));
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| (i as f64 + 1.0) * x as f64)
        .sum();
    Ok(2.0 * weighted / (n * total as f64) - (n + 1.0) / n)
}

/// Geometric mean of rule lift over every traversed walk edge, pooled
/// across walks: `exp(mean(ln lift))`.
pub fn geometric_mean_lift(
    walks: &[Walk],
    graph: &ItemGraph,
    rules: &RuleSet,
) -> Result<f64> {
    let mut log_sum = 0.0f64;
    let mut n_edges = 0u64;
    for walk in walks {
        for (a, b) in walk.edges() {
            let lift = rules
                .lift_for(graph.item(a), graph.item(b))
                .ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "no rule for traversed edge {} -> {}",
                        graph.item(a),
                        graph.item(b)
                    ))
                })?;
            if !(lift > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "non-positive lift on edge {} -> {}",
                    graph.item(a),
                    graph.item(b)
                )));
            }
            log_sum += lift.ln();
            n_edges += 1;
        }
    }
    if n_edges == 0 {
        return Err(Error::EmptyInput("no edges traversed".into()));
    }
    Ok((log_sum / n_edges as f64).exp())
}

/// Aggregate corpus statistics for a walk corpus.
///
/// Item Gini is computed over occurrence counts of items that appear in the
/// corpus; token Gini over REC-token occurrence counts after expanding each
/// item through the id map.
pub fn corpus_stats(
    walks: &[Walk],
    graph: &ItemGraph,
    rules: &RuleSet,
    id_map: &SemanticIdMap,
) -> Result<CorpusStats> {
    if walks.is_empty() {
        return Err(Error::EmptyInput("corpus has no walks".into()));
    }
    let mut item_counts: BTreeMap<u32, u64> = BTreeMap::new();
    let mut token_counts: BTreeMap<&str, u64> = BTreeMap::new();
    let mut total_len = 0usize;
    for walk in walks {
        total_len += walk.len();
        for &node in &walk.items {
            *item_counts.entry(node).or_insert(0) += 1;
            let item = graph.item(node);
            let tokens = id_map.tokens_for(item).ok_or_else(|| {
                Error::InvalidInput(format!("item '{item}' missing from id map"))
            })?;
            for t in tokens {
                *token_counts.entry(t.as_str()).or_insert(0) += 1;
            }
        }
    }
    let item_vec: Vec<u64> = item_counts.values().copied().collect();
    let token_vec: Vec<u64> = token_counts.values().copied().collect();
    Ok(CorpusStats {
        mean_length: total_len as f64 / walks.len() as f64,
        unique_items: item_counts.len() as u64,
        item_gini: gini(&item_vec)?,
        token_gini: gini(&token_vec)?,
        geom_lift: geometric_mean_lift(walks, graph, rules)?,
        n_walks: walks.len() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, WeightSource};
    use crate::rules::{mine_pairwise_rules, Window};
    use crate::tokenizer::SemanticIdMap;
    use crate::walks::Walk;

    /// O(n^2) pairwise oracle.
    fn gini_pairwise(counts: &[u64]) -> f64 {
        let n = counts.len() as f64;
        let total: u64 = counts.iter().sum();
        let mut diff_sum = 0.0;
        for &a in counts {
            for &b in counts {
                diff_sum += (a as f64 - b as f64).abs();
            }
        }
        diff_sum / (2.0 * n * total as f64)
    }

    #[test]
    fn gini_fixed_cases() {
        assert_eq!(gini(&[1, 1, 1, 1]).unwrap(), 0.0);
        // Direct pairwise evaluation: (n-1)/n for a single spike.
        assert!((gini(&[0, 0, 0, 1]).unwrap() - 0.75).abs() < 1e-15);
        // |1-3| * 2 / (2 * 2 * 4) = 0.25.
        assert!((gini(&[1, 3]).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn gini_rejects_degenerate_input() {
        assert!(gini(&[]).is_err());
        assert!(gini(&[0, 0]).is_err());
    }

    #[test]
    fn sorted_form_matches_pairwise_oracle() {
        use rand::Rng;
        let mut rng = crate::seeds::rng_for(0x61);
        for _ in 0..200 {
            let n = rng.random_range(1..=60usize);
            let counts: Vec<u64> = (0..n).map(|_| rng.random_range(0..50u64)).collect();
            if counts.iter().sum::<u64>() == 0 {
                continue;
            }
            let fast = gini(&counts).unwrap();
            let slow = gini_pairwise(&counts);
            assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow} on {counts:?}");
        }
    }

    #[test]
    fn gini_scale_invariant() {
        use rand::Rng;
        let mut rng = crate::seeds::rng_for(0x62);
        for _ in 0..50 {
            let n = rng.random_range(2..=30usize);
            let counts: Vec<u64> = (0..n).map(|_| rng.random_range(0..20u64)).collect();
            if counts.iter().sum::<u64>() == 0 {
                continue;
            }
            let k = rng.random_range(2..=9u64);
            let scaled: Vec<u64> = counts.iter().map(|&x| x * k).collect();
            assert_eq!(gini(&counts).unwrap(), gini(&scaled).unwrap());
        }
    }

    fn fixture() -> (ItemGraph, RuleSet, SemanticIdMap) {
        let log = crate::rules::tests::log_from(&[
            &["A", "B"],
            &["A", "B"],
            &["A", "C"],
            &["B"],
        ]);
        let rules = mine_pairwise_rules(&log, 1, Window::WholeSession).unwrap();
        let (graph, _) = build_graph(&rules, WeightSource::Confidence).unwrap();
        let mut map = SemanticIdMap::default();
        for (item, toks) in
            [("A", ["REC0", "REC3"]), ("B", ["REC1", "REC4"]), ("C", ["REC2", "REC3"])]
        {
            map.entries
                .insert(item.to_string(), toks.iter().map(|s| s.to_string()).collect());
        }
        (graph, rules, map)
    }

    fn walk_of(graph: &ItemGraph, items: &[&str]) -> Walk {
        Walk {
            items: items.iter().map(|i| graph.node_index(i).unwrap()).collect(),
            path_confidence: 1.0,
        }
    }

    #[test]
    fn unit_lift_everywhere_gives_one() {
        let log = crate::rules::tests::log_from(&[&["A", "B"]]);
        let rules = mine_pairwise_rules(&log, 1, Window::WholeSession).unwrap();
        let (graph, _) = build_graph(&rules, WeightSource::Confidence).unwrap();
        let walks = vec![walk_of(&graph, &["A", "B", "A"])];
        assert!((geometric_mean_lift(&walks, &graph, &rules).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn geometric_mean_of_mixed_lifts() {
        // Two edges with lifts 4 and 1 traversed equally: sqrt(4 * 1) = 2.
        let rules = RuleSet::from_rules(vec![
            crate::rules::AssociationRule {
                antecedent: "A".into(),
                consequent: "B".into(),
                support: 0.25,
                confidence: 0.5,
                lift: 4.0,
                cooccur_count: 1,
            },
            crate::rules::AssociationRule {
                antecedent: "B".into(),
                consequent: "A".into(),
                support: 0.25,
                confidence: 0.25,
                lift: 1.0,
                cooccur_count: 1,
            },
        ])
        .unwrap();
        let (graph, _) = build_graph(&rules, WeightSource::Confidence).unwrap();
        let walks = vec![walk_of(&graph, &["A", "B", "A"])];
        assert!((geometric_mean_lift(&walks, &graph, &rules).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_edge_walk_reports_rule_lift() {
        let (graph, rules, _) = fixture();
        let walks = vec![walk_of(&graph, &["A", "B"])];
        let expected = (2.0 / 3.0) / (3.0 / 4.0);
        assert!(
            (geometric_mean_lift(&walks, &graph, &rules).unwrap() - expected).abs() < 1e-12
        );
    }

    #[test]
    fn missing_rule_is_an_error() {
        let (graph, rules, _) = fixture();
        let mut pruned = rules.clone();
        pruned.rules.retain(|r| !(r.antecedent == "A" && r.consequent == "B"));
        let walks = vec![walk_of(&graph, &["A", "B"])];
        assert!(geometric_mean_lift(&walks, &graph, &pruned).is_err());
    }

    #[test]
    fn segmentation_invariance() {
        let (graph, rules, _) = fixture();
        let whole = vec![walk_of(&graph, &["A", "B", "A", "C"])];
        let split = vec![walk_of(&graph, &["A", "B"]), walk_of(&graph, &["B", "A", "C"])];
        let a = geometric_mean_lift(&whole, &graph, &rules).unwrap();
        let b = geometric_mean_lift(&split, &graph, &rules).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn stats_of_tiny_corpus() {
        let (graph, rules, map) = fixture();
        let walks = vec![walk_of(&graph, &["A", "B"])];
        let stats = corpus_stats(&walks, &graph, &rules, &map).unwrap();
        assert_eq!(stats.mean_length, 2.0);
        assert_eq!(stats.unique_items, 2);
        assert_eq!(stats.n_walks, 1);
    }

    #[test]
    fn duplicate_walks_change_counts_not_uniques() {
        let (graph, rules, map) = fixture();
        let w = walk_of(&graph, &["A", "B"]);
        let one = corpus_stats(std::slice::from_ref(&w), &graph, &rules, &map).unwrap();
        let two = corpus_stats(&[w.clone(), w], &graph, &rules, &map).unwrap();
        assert_eq!(one.unique_items, two.unique_items);
        assert_eq!(two.n_walks, 2);
        assert_eq!(one.item_gini, two.item_gini);
    }

    #[test]
    fn planted_concentration_matches_pairwise_oracle() {
        // Item A in every walk, B and C once each: counts {A: 3, B: 2, C: 1}
        // after these walks; compare against the brute-force formula.
        let (graph, rules, map) = fixture();
        let walks = vec![
            walk_of(&graph, &["A", "B"]),
            walk_of(&graph, &["A", "B"]),
            walk_of(&graph, &["A", "C"]),
        ];
        let stats = corpus_stats(&walks, &graph, &rules, &map).unwrap();
        assert!((stats.item_gini - gini_pairwise(&[3, 2, 1])).abs() < 1e-12);
        // Token expansion: A=REC0,REC3 B=REC1,REC4 C=REC2,REC3.
        // Counts: REC0:3 REC3:4 REC1:2 REC4:2 REC2:1.
        assert!((stats.token_gini - gini_pairwise(&[3, 4, 2, 2, 1])).abs() < 1e-12);
    }

    #[test]
    fn missing_id_map_entry_is_an_error() {
        let (graph, rules, mut map) = fixture();
        map.entries.remove("B");
        let walks = vec![walk_of(&graph, &["A", "B"])];
        assert!(corpus_stats(&walks, &graph, &rules, &map).is_err());
    }
}
