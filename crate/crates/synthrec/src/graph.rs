//! Immutable weighted item graph in CSR layout.
//!
//! Item ids are dense-indexed at build time; strings survive only at the
//! serialization boundary. The finished graph is read-only and can be shared
//! across any number of walker threads.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::rules::RuleSet;
use crate::seeds;

pub const GRAPH_FORMAT_VERSION: u32 = 1;
const GRAPH_MAGIC: &[u8; 4] = b"RECG";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightSource {
    Confidence,
    Lift,
    Support,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemGraph {
    items: Vec<String>,
    index: BTreeMap<String, u32>,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<f64>,
    confidences: Vec<f64>,
}

/// One outgoing edge as seen from a source node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub target: u32,
    pub weight: f64,
    pub confidence: f64,
}

impl ItemGraph {
    pub fn node_count(&self) -> usize {
        self.items.len()
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn item(&self, node: u32) -> &str {
        &self.items[node as usize]
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn node_index(&self, item: &str) -> Option<u32> {
        self.index.get(item).copied()
    }

    pub fn out_degree(&self, node: u32) -> usize {
        let n = node as usize;
        self.offsets[n + 1] - self.offsets[n]
    }

    /// Outgoing edges of `node`, targets in strictly increasing index order.
    pub fn out_edges(&self, node: u32) -> impl Iterator<Item = Edge> + '_ {
        let n = node as usize;
        let range = self.offsets[n]..self.offsets[n + 1];
        range.map(move |i| Edge {
            target: self.targets[i],
            weight: self.weights[i],
            confidence: self.confidences[i],
        })
    }

    /// Binary search over the sorted adjacency row.
    pub fn has_edge(&self, source: u32, target: u32) -> bool {
        let n = source as usize;
        self.targets[self.offsets[n]..self.offsets[n + 1]]
            .binary_search(&target)
            .is_ok()
    }

    pub fn edge(&self, source: u32, target: u32) -> Option<Edge> {
        let n = source as usize;
        let row = &self.targets[self.offsets[n]..self.offsets[n + 1]];
        row.binary_search(&target).ok().map(|pos| {
            let i = self.offsets[n] + pos;
            Edge {
                target: self.targets[i],
                weight: self.weights[i],
                confidence: self.confidences[i],
            }
        })
    }

    /// All edges as (source item, target item, weight, confidence).
    pub fn edge_list(&self) -> Vec<(String, String, f64, f64)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for src in 0..self.node_count() as u32 {
            for e in self.out_edges(src) {
                out.push((
                    self.item(src).to_string(),
                    self.item(e.target).to_string(),
                    e.weight,
                    e.confidence,
                ));
            }
        }
        out
    }

    fn from_edges(
        items: Vec<String>,
        mut edges: Vec<(u32, u32, f64, f64)>,
    ) -> Result<ItemGraph> {
        let n = items.len();
        edges.sort_by_key(|a| (a.0, a.1));
        for w in edges.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::InvalidInput(format!(
                    "duplicate edge {} -> {}",
                    items[w[0].0 as usize], items[w[0].1 as usize]
                )));
            }
        }
        let mut offsets = vec![0usize; n + 1];
        for &(src, _, _, _) in &edges {
            offsets[src as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut targets = Vec::with_capacity(edges.len());
        let mut weights = Vec::with_capacity(edges.len());
        let mut confidences = Vec::with_capacity(edges.len());
        for (src, dst, w, c) in edges {
            if src == dst {
                return Err(Error::InvalidInput(format!(
                    "self-loop on {}",
                    items[src as usize]
                )));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidInput(format!("non-positive edge weight {w}")));
            }
            if !(c > 0.0 && c <= 1.0) {
                return Err(Error::InvalidInput(format!("edge confidence {c} outside (0, 1]")));
            }
            targets.push(dst);
            weights.push(w);
            confidences.push(c);
        }
        let index = items
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        Ok(ItemGraph { items, index, offsets, targets, weights, confidences })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub self_loops_dropped: u64,
}

/// Build the item graph from mined rules: one directed edge per rule, weight
/// taken from the selected statistic. Items with no surviving rule are
/// excluded; degenerate self-loop rules are dropped and counted.
pub fn build_graph(rules: &RuleSet, weight_source: WeightSource) -> Result<(ItemGraph, BuildStats)> {
    if rules.is_empty() {
        return Err(Error::EmptyInput("cannot build a graph from an empty rule set".into()));
    }
    let mut stats = BuildStats::default();
    let mut involved: BTreeSet<&str> = BTreeSet::new();
    for r in &rules.rules {
        if r.antecedent == r.consequent {
            stats.self_loops_dropped += 1;
            continue;
        }
        involved.insert(&r.antecedent);
        involved.insert(&r.consequent);
    }
    if involved.is_empty() {
        return Err(Error::EmptyInput("all rules were degenerate self-loops".into()));
    }
    let items: Vec<String> = involved.iter().map(|s| s.to_string()).collect();
    let index: BTreeMap<&str, u32> =
        involved.iter().enumerate().map(|(i, s)| (*s, i as u32)).collect();

    let mut edges = Vec::new();
    for r in &rules.rules {
        if r.antecedent == r.consequent {
            continue;
        }
        let weight = match weight_source {
            WeightSource::Confidence => r.confidence,
            WeightSource::Lift => r.lift,
            WeightSource::Support => r.support,
        };
        edges.push((
            index[r.antecedent.as_str()],
            index[r.consequent.as_str()],
            weight,
            r.confidence,
        ));
    }
    Ok((ItemGraph::from_edges(items, edges)?, stats))
}

/// Add the reverse of every edge that lacks one, reusing its weight and
/// confidence. Existing reverse edges keep their own statistics.
pub fn symmetrize(graph: &ItemGraph) -> Result<ItemGraph> {
    let mut edges: BTreeMap<(u32, u32), (f64, f64)> = BTreeMap::new();
    for src in 0..graph.node_count() as u32 {
        for e in graph.out_edges(src) {
            edges.insert((src, e.target), (e.weight, e.confidence));
        }
    }
    let mut merged = edges.clone();
    for (&(a, b), &(w, c)) in &edges {
        merged.entry((b, a)).or_insert((w, c));
    }
    ItemGraph::from_edges(
        graph.items.clone(),
        merged.into_iter().map(|((a, b), (w, c))| (a, b, w, c)).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    /// Remove a pseudo-random fraction of edges; both endpoints stay nodes.
    EdgeHoldout,
    /// Remove all edges touching a held-out node set; the held-out nodes
    /// leave the training graph entirely.
    NodeHoldout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestEdge {
    pub source: String,
    pub target: String,
    pub weight: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone)]
pub struct EdgeSplit {
    pub train_graph: ItemGraph,
    pub test_edges: Vec<TestEdge>,
}

/// Hold out edges or nodes for evaluation; deterministic in `seed`.
pub fn split_edges(
    graph: &ItemGraph,
    holdout_fraction: f64,
    seed: u64,
    mode: SplitMode,
) -> Result<EdgeSplit> {
    if !(0.0..1.0).contains(&holdout_fraction) {
        return Err(Error::InvalidConfig(format!(
            "holdout_fraction must be in [0, 1), got {holdout_fraction}"
        )));
    }
    let all_edges: Vec<(u32, u32, f64, f64)> = {
        let mut v = Vec::with_capacity(graph.edge_count());
        for src in 0..graph.node_count() as u32 {
            for e in graph.out_edges(src) {
                v.push((src, e.target, e.weight, e.confidence));
            }
        }
        v
    };

    let (train_edges, test_edges, train_items): (Vec<_>, Vec<_>, Vec<String>) = match mode {
        SplitMode::EdgeHoldout => {
            let m = all_edges.len();
            let k = ((m as f64 * holdout_fraction).round() as usize).min(m);
            let mut order: Vec<usize> = (0..m).collect();
            let mut rng = seeds::rng_for(seeds::substream(seed, 1));
            order.shuffle(&mut rng);
            let held: BTreeSet<usize> = order[..k].iter().copied().collect();
            let mut train = Vec::new();
            let mut test = Vec::new();
            for (i, e) in all_edges.iter().enumerate() {
                if held.contains(&i) {
                    test.push(*e);
                } else {
                    train.push(*e);
                }
            }
            (train, test, graph.items.clone())
        }
        SplitMode::NodeHoldout => {
            let n = graph.node_count();
            let k = ((n as f64 * holdout_fraction).round() as usize).clamp(0, n.saturating_sub(1));
            let mut order: Vec<u32> = (0..n as u32).collect();
            let mut rng = seeds::rng_for(seeds::substream(seed, 2));
            order.shuffle(&mut rng);
            let held: BTreeSet<u32> = order[..k].iter().copied().collect();
            let mut train = Vec::new();
            let mut test = Vec::new();
            for e in &all_edges {
                if held.contains(&e.0) || held.contains(&e.1) {
                    test.push(*e);
                } else {
                    train.push(*e);
                }
            }
            let kept_items: Vec<String> = (0..n as u32)
                .filter(|i| !held.contains(i))
                .map(|i| graph.item(i).to_string())
                .collect();
            // Re-index surviving edges into the reduced node space.
            let new_index: BTreeMap<&str, u32> = kept_items
                .iter()
                .enumerate()
                .map(|(i, s)| (s.as_str(), i as u32))
                .collect();
            let train = train
                .into_iter()
                .map(|(a, b, w, c)| {
                    (new_index[graph.item(a)], new_index[graph.item(b)], w, c)
                })
                .collect();
            (train, test, kept_items)
        }
    };

    if train_edges.is_empty() {
        return Err(Error::InvalidInput(
            "holdout removed every edge; the training graph would be empty".into(),
        ));
    }
    let test_edges = test_edges
        .into_iter()
        .map(|(a, b, w, c)| TestEdge {
            source: graph.item(a).to_string(),
            target: graph.item(b).to_string(),
            weight: w,
            confidence: c,
        })
        .collect();
    Ok(EdgeSplit { train_graph: ItemGraph::from_edges(train_items, train_edges)?, test_edges })
}

fn write_u32(w: &mut impl Write, v: u32, path: &Path) -> Result<()> {
    w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))
}

fn write_u64(w: &mut impl Write, v: u64, path: &Path) -> Result<()> {
    w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))
}

fn write_f64(w: &mut impl Write, v: f64, path: &Path) -> Result<()> {
    w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], path: &Path) -> Result<()> {
    r.read_exact(buf).map_err(|e| Error::io(path, e))
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, path)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read, path: &Path) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, path)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read, path: &Path) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, path)?;
    Ok(f64::from_le_bytes(b))
}

/// Write the binary graph file: magic, version, counts, node-id string
/// table, CSR offsets, then target/weight/confidence arrays.
pub fn write_graph(path: &Path, graph: &ItemGraph) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(GRAPH_MAGIC).map_err(|e| Error::io(path, e))?;
    write_u32(&mut w, GRAPH_FORMAT_VERSION, path)?;
    write_u64(&mut w, graph.node_count() as u64, path)?;
    write_u64(&mut w, graph.edge_count() as u64, path)?;
    for item in &graph.items {
        let bytes = item.as_bytes();
        write_u32(&mut w, bytes.len() as u32, path)?;
        w.write_all(bytes).map_err(|e| Error::io(path, e))?;
    }
    for &off in &graph.offsets {
        write_u64(&mut w, off as u64, path)?;
    }
    for &t in &graph.targets {
        write_u32(&mut w, t, path)?;
    }
    for &v in &graph.weights {
        write_f64(&mut w, v, path)?;
    }
    for &v in &graph.confidences {
        write_f64(&mut w, v, path)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_graph(path: &Path) -> Result<ItemGraph> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, path)?;
    if &magic != GRAPH_MAGIC {
        return Err(Error::format(path, "bad magic, not a graph file"));
    }
    let version = read_u32(&mut r, path)?;
    if version != GRAPH_FORMAT_VERSION {
        return Err(Error::format(path, format!("unsupported graph version {version}")));
    }
    let n = read_u64(&mut r, path)? as usize;
    let m = read_u64(&mut r, path)? as usize;
    let mut items = Vec::with_capacity(n);
    for _ in 0..n {
        let len = read_u32(&mut r, path)? as usize;
        let mut buf = vec![0u8; len];
        read_exact(&mut r, &mut buf, path)?;
        items.push(
            String::from_utf8(buf).map_err(|_| Error::format(path, "non-UTF8 item id"))?,
        );
    }
    let mut offsets = Vec::with_capacity(n + 1);
    for _ in 0..=n {
        offsets.push(read_u64(&mut r, path)? as usize);
    }
    if offsets.first() != Some(&0) || offsets.last() != Some(&m) {
        return Err(Error::format(path, "corrupt CSR offsets"));
    }
    if offsets.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::format(path, "CSR offsets not monotone"));
    }
    let mut targets = Vec::with_capacity(m);
    for _ in 0..m {
        let t = read_u32(&mut r, path)?;
        if t as usize >= n {
            return Err(Error::format(path, format!("edge target {t} out of range")));
        }
        targets.push(t);
    }
    let mut weights = Vec::with_capacity(m);
    for _ in 0..m {
        let w = read_f64(&mut r, path)?;
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::format(path, format!("non-positive edge weight {w}")));
        }
        weights.push(w);
    }
    let mut confidences = Vec::with_capacity(m);
    for _ in 0..m {
        let c = read_f64(&mut r, path)?;
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::format(path, format!("edge confidence {c} outside (0, 1]")));
        }
        confidences.push(c);
    }
    for node in 0..n {
        let row = &targets[offsets[node]..offsets[node + 1]];
        if row.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::format(path, format!("adjacency of node {node} not sorted")));
        }
    }
    let index = items
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i as u32))
        .collect();
    Ok(ItemGraph { items, index, offsets, targets, weights, confidences })
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    src: String,
    dst: String,
    w: f64,
    conf: f64,
}

/// Human-inspectable JSON-lines dump of every edge.
pub fn write_graph_dump(path: &Path, graph: &ItemGraph) -> Result<()> {
    jsonl::write_jsonl(
        path,
        graph
            .edge_list()
            .into_iter()
            .map(|(src, dst, w, conf)| EdgeRecord { src, dst, w, conf }),
    )
}
