//! Synthetic user-history generation by biased random walks.
//!
//! Walks follow the Node2Vec transition rule: from current node `v` with
//! previous node `t`, the unnormalized probability of moving to `x` is
//! `bias(t, x) * w(v, x)` where the bias is `1/p` for returning to `t`, `1`
//! when `x` is adjacent to `t`, and `1/q` otherwise. First-order walks use
//! the edge weights alone. A walk terminates with probability `alpha_stop`
//! after each step once it has reached `min_len`, at `max_len`, or at a
//! dangling node. Walks shorter than `min_len` or whose cumulative path
//! confidence (product of traversed edge confidences) falls below the
//! configured threshold are rejected and resampled, never truncated.
//!
//! Walks carry no position or rank field at all; a generated history is an
//! item sequence and its path confidence, nothing else.

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ItemGraph;
use crate::jsonl;
use crate::seeds;

/// Generation aborts when fewer than this fraction of attempts is accepted.
pub const DEFAULT_ACCEPT_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WalkOrder {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartPolicy {
    Uniform,
    DegreeWeighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub order: WalkOrder,
    /// Return parameter; higher values discourage revisiting the previous node.
    pub p: f64,
    /// In-out parameter; q > 1 favors staying near the previous node.
    pub q: f64,
    /// Per-step stop probability, applied once a walk reaches `min_len`.
    pub alpha_stop: f64,
    /// Minimum cumulative path confidence; walks below it are rejected.
    pub path_conf_threshold: Option<f64>,
    pub min_len: usize,
    pub max_len: usize,
    pub n_walks: usize,
    pub seed: u64,
    pub start_policy: StartPolicy,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            order: WalkOrder::Second,
            p: 1.0,
            q: 1.0,
            alpha_stop: 0.15,
            path_conf_threshold: None,
            min_len: 2,
            max_len: 50,
            n_walks: 0,
            seed: 0,
            start_policy: StartPolicy::Uniform,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if matches!(self.order, WalkOrder::Second) && (!(self.p > 0.0) || !(self.q > 0.0)) {
            problems.push(format!("p and q must be positive, got p={} q={}", self.p, self.q));
        }
        if !(self.alpha_stop > 0.0 && self.alpha_stop < 1.0) {
            problems.push(format!("alpha_stop must be in (0, 1), got {}", self.alpha_stop));
        }
        if let Some(t) = self.path_conf_threshold {
            if !(t > 0.0) {
                problems.push(format!("path_conf_threshold must be positive, got {t}"));
            }
        }
        if self.min_len < 2 {
            problems.push(format!("min_len must be >= 2, got {}", self.min_len));
        }
        if self.min_len > self.max_len {
            problems.push(format!(
                "min_len {} exceeds max_len {}",
                self.min_len, self.max_len
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }
}

/// A generated user history: node indices plus the product of traversed edge
/// confidences.
#[derive(Debug, Clone, PartialEq)]
pub struct Walk {
    pub items: Vec<u32>,
    pub path_confidence: f64,
}

impl Walk {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Consecutive node pairs.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.items.windows(2).map(|w| (w[0], w[1]))
    }
}

/// Normalized next-step distribution from `cur`, conditioned on `prev` for
/// second-order walks. A dangling node yields an empty distribution, which
/// signals natural termination rather than failure.
pub fn transition_distribution(
    graph: &ItemGraph,
    prev: Option<u32>,
    cur: u32,
    cfg: &WalkConfig,
) -> Vec<(u32, f64)> {
    let unnorm = unnormalized_transitions(graph, prev, cur, cfg);
    let total: f64 = unnorm.iter().map(|(_, w, _)| w).sum();
    if total <= 0.0 {
        return Vec::new();
    }
    unnorm.into_iter().map(|(t, w, _)| (t, w / total)).collect()
}

fn unnormalized_transitions(
    graph: &ItemGraph,
    prev: Option<u32>,
    cur: u32,
    cfg: &WalkConfig,
) -> Vec<(u32, f64, f64)> {
    graph
        .out_edges(cur)
        .map(|e| {
            let bias = match (cfg.order, prev) {
                (WalkOrder::Second, Some(t)) => {
                    if e.target == t {
                        1.0 / cfg.p
                    } else if graph.has_edge(t, e.target) {
                        1.0
                    } else {
                        1.0 / cfg.q
                    }
                }
                _ => 1.0,
            };
            (e.target, bias * e.weight, e.confidence)
        })
        .collect()
}

fn draw_weighted(rng: &mut ChaCha8Rng, entries: &[(u32, f64, f64)]) -> (u32, f64) {
    let total: f64 = entries.iter().map(|(_, w, _)| w).sum();
    let mut u = rng.random::<f64>() * total;
    for &(t, w, c) in entries {
        u -= w;
        if u <= 0.0 {
            return (t, c);
        }
    }
    let last = entries.last().unwrap();
    (last.0, last.2)
}

/// Draw one step of the walk process: the next node and the traversed
/// edge's confidence. `None` at a dangling node. This is the exact sampler
/// [`sample_walk`] uses internally.
pub fn sample_transition(
    graph: &ItemGraph,
    prev: Option<u32>,
    cur: u32,
    cfg: &WalkConfig,
    rng: &mut ChaCha8Rng,
) -> Option<(u32, f64)> {
    let transitions = unnormalized_transitions(graph, prev, cur, cfg);
    if transitions.is_empty() {
        return None;
    }
    Some(draw_weighted(rng, &transitions))
}

fn draw_start(rng: &mut ChaCha8Rng, graph: &ItemGraph, policy: StartPolicy) -> u32 {
    match policy {
        StartPolicy::Uniform => rng.random_range(0..graph.node_count()) as u32,
        StartPolicy::DegreeWeighted => {
            let total: usize = (0..graph.node_count() as u32)
                .map(|n| graph.out_degree(n))
                .sum();
            if total == 0 {
                return rng.random_range(0..graph.node_count()) as u32;
            }
            let mut u = rng.random_range(0..total);
            for n in 0..graph.node_count() as u32 {
                let d = graph.out_degree(n);
                if u < d {
                    return n;
                }
                u -= d;
            }
            graph.node_count() as u32 - 1
        }
    }
}

/// Sample one walk from the given stream. Returns `None` when the walk is
/// rejected (too short, or below the path-confidence threshold).
pub fn sample_walk(graph: &ItemGraph, cfg: &WalkConfig, rng: &mut ChaCha8Rng) -> Option<Walk> {
    debug_assert!(graph.node_count() > 0);
    let start = draw_start(rng, graph, cfg.start_policy);
    let mut items = vec![start];
    let mut confidence = 1.0f64;
    let mut prev: Option<u32> = None;

    loop {
        if items.len() >= cfg.max_len {
            break;
        }
        let cur = *items.last().unwrap();
        if graph.out_degree(cur) == 0 {
            break; // dangling node: natural termination
        }
        if items.len() >= cfg.min_len && rng.random::<f64>() < cfg.alpha_stop {
            break;
        }
        let (next, edge_conf) = sample_transition(graph, prev, cur, cfg, rng)
            .expect("out-degree checked above");
        confidence *= edge_conf;
        prev = Some(cur);
        items.push(next);
    }

    if items.len() < cfg.min_len {
        return None;
    }
    if let Some(threshold) = cfg.path_conf_threshold {
        if confidence < threshold {
            return None;
        }
    }
    Some(Walk { items, path_confidence: confidence })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub n_walks: u64,
    pub attempts: u64,
    pub accept_rate: f64,
    pub mean_len: f64,
    pub unique_items: u64,
}

/// Generate exactly `cfg.n_walks` accepted walks.
///
/// Attempts are indexed; attempt `i` always draws from the substream derived
/// from `(seed, i)`, and the corpus is the first `n_walks` accepted attempts
/// in attempt order. The output is therefore byte-identical across runs and
/// worker counts. Rejected attempts are retried under later indices; if the
/// acceptance rate stays below [`DEFAULT_ACCEPT_FLOOR`] after a probing
/// budget, generation aborts.
pub fn generate_corpus_walks(
    graph: &ItemGraph,
    cfg: &WalkConfig,
) -> Result<(Vec<Walk>, GenerationReport)> {
    cfg.validate()?;
    if graph.node_count() == 0 {
        return Err(Error::EmptyInput("cannot walk an empty graph".into()));
    }
    if cfg.n_walks == 0 {
        return Ok((
            Vec::new(),
            GenerationReport {
                n_walks: 0,
                attempts: 0,
                accept_rate: 0.0,
                mean_len: 0.0,
                unique_items: 0,
            },
        ));
    }

    let floor = DEFAULT_ACCEPT_FLOOR;
    // Enough attempts that a healthy config cannot trip the floor by chance.
    let probe_budget = (10.0 / floor).ceil() as u64;
    let round_size = cfg.n_walks.max(256);

    let mut accepted: Vec<Walk> = Vec::with_capacity(cfg.n_walks);
    let mut attempt_base: u64 = 0;
    while accepted.len() < cfg.n_walks {
        let round: Vec<Option<Walk>> = (0..round_size as u64)
            .into_par_iter()
            .map(|offset| {
                let attempt = attempt_base + offset;
                let mut rng = seeds::rng_for(seeds::substream(cfg.seed, attempt));
                sample_walk(graph, cfg, &mut rng)
            })
            .collect();
        for (offset, walk) in round.into_iter().enumerate() {
            if let Some(w) = walk {
                if accepted.len() < cfg.n_walks {
                    accepted.push(w);
                    if accepted.len() == cfg.n_walks {
                        // Attempts consumed: through this offset in the round.
                        attempt_base += offset as u64 + 1;
                        return Ok(finish(accepted, attempt_base));
                    }
                }
            }
        }
        attempt_base += round_size as u64;
        if attempt_base >= probe_budget {
            let rate = accepted.len() as f64 / attempt_base as f64;
            if rate < floor {
                return Err(Error::AcceptanceRateTooLow { rate, floor });
            }
        }
    }
    Ok(finish(accepted, attempt_base))
}

fn finish(walks: Vec<Walk>, attempts: u64) -> (Vec<Walk>, GenerationReport) {
    let n = walks.len() as u64;
    let total_len: usize = walks.iter().map(Walk::len).sum();
    let unique: BTreeSet<u32> = walks.iter().flat_map(|w| w.items.iter().copied()).collect();
    let report = GenerationReport {
        n_walks: n,
        attempts,
        accept_rate: if attempts > 0 { n as f64 / attempts as f64 } else { 0.0 },
        mean_len: if n > 0 { total_len as f64 / n as f64 } else { 0.0 },
        unique_items: unique.len() as u64,
    };
    (walks, report)
}

#[derive(Serialize, Deserialize)]
struct WalkRecord {
    items: Vec<String>,
    path_conf: f64,
}

/// Persist walks as JSON-lines with string item ids.
pub fn write_walks(path: &Path, walks: &[Walk], graph: &ItemGraph) -> Result<()> {
    jsonl::write_jsonl(
        path,
        walks.iter().map(|w| WalkRecord {
            items: w.items.iter().map(|&i| graph.item(i).to_string()).collect(),
            path_conf: w.path_confidence,
        }),
    )
}

/// Load walks written by [`write_walks`], re-indexing ids through `graph`.
pub fn read_walks(path: &Path, graph: &ItemGraph) -> Result<Vec<Walk>> {
    let records: Vec<WalkRecord> = jsonl::read_jsonl(path)?;
    let mut walks = Vec::with_capacity(records.len());
    for (idx, r) in records.into_iter().enumerate() {
        let mut items = Vec::with_capacity(r.items.len());
        for id in &r.items {
            let node = graph.node_index(id).ok_or_else(|| {
                Error::parse(path, idx + 1, format!("item '{id}' not in graph"))
            })?;
            items.push(node);
        }
        walks.push(Walk { items, path_confidence: r.path_conf });
    }
    Ok(walks)
}

/// Item sequences (string ids) for downstream training.
pub fn walks_to_sequences(walks: &[Walk], graph: &ItemGraph) -> Vec<Vec<String>> {
    walks
        .iter()
        .map(|w| w.items.iter().map(|&i| graph.item(i).to_string()).collect())
        .collect()
}
