//! Semantic item ids by residual k-means quantization.
//!
//! A codebook is fit layer by layer: each layer runs seeded k-means++ on the
//! residuals left after subtracting the greedy assignments of all earlier
//! layers. Encoding is a progressive beam search over per-layer code choices
//! that minimizes cumulative squared residual; beam width 1 degenerates to
//! greedy nearest-centroid per layer. Ids render as `REC{global}` tokens in
//! one flat vocabulary of size sum(K_l), using per-layer offsets.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::seeds;

pub const EMBEDDING_FORMAT_VERSION: u32 = 1;
pub const CODEBOOK_FORMAT_VERSION: u32 = 1;
const EMBEDDING_MAGIC: &[u8; 4] = b"RECE";
const CODEBOOK_MAGIC: &[u8; 4] = b"RECB";

/// Dense row-major item embeddings; row index identifies the item.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n_items: usize,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(n_items: usize, dim: usize, data: Vec<f64>) -> Result<EmbeddingMatrix> {
        if dim == 0 {
            return Err(Error::InvalidInput("embedding dim must be positive".into()));
        }
        if data.len() != n_items * dim {
            return Err(Error::InvalidInput(format!(
                "expected {} values for {n_items}x{dim}, got {}",
                n_items * dim,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("embeddings contain non-finite values".into()));
        }
        Ok(EmbeddingMatrix { n_items, dim, data })
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodebookLayer {
    /// k x dim, row-major.
    pub centroids: Vec<f64>,
    pub k: usize,
}

impl CodebookLayer {
    fn centroid(&self, code: usize, dim: usize) -> &[f64] {
        &self.centroids[code * dim..(code + 1) * dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    layers: Vec<CodebookLayer>,
    dim: usize,
}

/// One item's discrete code sequence, one code per layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SemanticId {
    pub codes: Vec<u32>,
}

impl Codebook {
    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.k).collect()
    }

    pub fn layers(&self) -> &[CodebookLayer] {
        &self.layers
    }

    /// Offset of layer `l` into the flat REC token vocabulary.
    pub fn layer_offset(&self, l: usize) -> usize {
        self.layers[..l].iter().map(|layer| layer.k).sum()
    }

    /// Total REC vocabulary size, sum of all layer sizes.
    pub fn vocab_size(&self) -> usize {
        self.layer_offset(self.layers.len())
    }

    /// Beam-search encoding over layer-wise code choices.
    ///
    /// Keeps the `beam` best partial paths by cumulative squared residual;
    /// exact ties prefer the lexicographically smaller code sequence.
    pub fn encode(&self, row: &[f64], beam: usize) -> Result<SemanticId> {
        if beam == 0 {
            return Err(Error::InvalidConfig("beam must be >= 1".into()));
        }
        if row.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "row has dim {}, codebook expects {}",
                row.len(),
                self.dim
            )));
        }
        struct Path {
            codes: Vec<u32>,
            residual: Vec<f64>,
            cost: f64,
        }
        let mut paths = vec![Path {
            codes: Vec::new(),
            residual: row.to_vec(),
            cost: sq_norm(row),
        }];
        for layer in &self.layers {
            let mut candidates: Vec<Path> = Vec::with_capacity(paths.len() * layer.k);
            for path in &paths {
                for code in 0..layer.k {
                    let centroid = layer.centroid(code, self.dim);
                    let mut residual = path.residual.clone();
                    for (r, c) in residual.iter_mut().zip(centroid) {
                        *r -= c;
                    }
                    let cost = sq_norm(&residual);
                    let mut codes = path.codes.clone();
                    codes.push(code as u32);
                    candidates.push(Path { codes, residual, cost });
                }
            }
            candidates.sort_by(|a, b| {
                a.cost
                    .partial_cmp(&b.cost)
                    .unwrap()
                    .then_with(|| a.codes.cmp(&b.codes))
            });
            candidates.truncate(beam);
            paths = candidates;
        }
        Ok(SemanticId { codes: paths.remove(0).codes })
    }

    /// Squared residual left after encoding `row`.
    pub fn encoding_residual(&self, row: &[f64], beam: usize) -> Result<f64> {
        let id = self.encode(row, beam)?;
        let rec = self.decode(&id)?;
        Ok(row.iter().zip(&rec).map(|(a, b)| (a - b) * (a - b)).sum())
    }

    /// Sum of the addressed centroids.
    pub fn decode(&self, id: &SemanticId) -> Result<Vec<f64>> {
        self.decode_prefix(id, self.layers.len())
    }

    /// Reconstruction using only the first `n_layers` codes.
    pub fn decode_prefix(&self, id: &SemanticId, n_layers: usize) -> Result<Vec<f64>> {
        if id.codes.len() != self.layers.len() {
            return Err(Error::InvalidInput(format!(
                "id has {} codes, codebook has {} layers",
                id.codes.len(),
                self.layers.len()
            )));
        }
        if n_layers > self.layers.len() {
            return Err(Error::InvalidInput(format!(
                "prefix length {n_layers} exceeds {} layers",
                self.layers.len()
            )));
        }
        let mut out = vec![0.0; self.dim];
        for (layer, &code) in self.layers.iter().zip(&id.codes).take(n_layers) {
            if code as usize >= layer.k {
                return Err(Error::InvalidInput(format!(
                    "code {code} out of range for layer of size {}",
                    layer.k
                )));
            }
            for (o, c) in out.iter_mut().zip(layer.centroid(code as usize, self.dim)) {
                *o += c;
            }
        }
        Ok(out)
    }

    /// `REC{global}` token strings for an id, using per-layer offsets into
    /// the flat vocabulary.
    pub fn render_tokens(&self, id: &SemanticId) -> Result<Vec<String>> {
        if id.codes.len() != self.layers.len() {
            return Err(Error::InvalidInput(format!(
                "id has {} codes, codebook has {} layers",
                id.codes.len(),
                self.layers.len()
            )));
        }
        let mut tokens = Vec::with_capacity(id.codes.len());
        let mut offset = 0usize;
        for (layer, &code) in self.layers.iter().zip(&id.codes) {
            if code as usize >= layer.k {
                return Err(Error::InvalidInput(format!(
                    "code {code} out of range for layer of size {}",
                    layer.k
                )));
            }
            tokens.push(format!("REC{}", offset + code as usize));
            offset += layer.k;
        }
        Ok(tokens)
    }

    /// Inverse of [`Codebook::render_tokens`].
    pub fn parse_tokens(&self, tokens: &[String]) -> Result<SemanticId> {
        if tokens.len() != self.layers.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} tokens, got {}",
                self.layers.len(),
                tokens.len()
            )));
        }
        let mut codes = Vec::with_capacity(tokens.len());
        let mut offset = 0usize;
        for (layer, token) in self.layers.iter().zip(tokens) {
            let global: usize = token
                .strip_prefix("REC")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::InvalidInput(format!("bad token '{token}'")))?;
            if global < offset || global >= offset + layer.k {
                return Err(Error::InvalidInput(format!(
                    "token '{token}' outside its layer range [{offset}, {})",
                    offset + layer.k
                )));
            }
            codes.push((global - offset) as u32);
            offset += layer.k;
        }
        Ok(SemanticId { codes })
    }
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Fit a residual-quantization codebook.
///
/// Layer `l` is fit by seeded k-means++ plus Lloyd iterations on the
/// residuals after greedy assignment of layers `< l`. Empty clusters are
/// re-seeded from the point farthest from its assigned centroid. The result
/// is bit-exact for fixed `(emb, layers, kmeans_iters, seed)`.
pub fn fit_rq_kmeans(
    emb: &EmbeddingMatrix,
    layers: &[usize],
    kmeans_iters: usize,
    seed: u64,
) -> Result<Codebook> {
    if layers.is_empty() {
        return Err(Error::InvalidConfig("need at least one codebook layer".into()));
    }
    if layers.contains(&0) {
        return Err(Error::InvalidConfig("layer sizes must be positive".into()));
    }
    if kmeans_iters < 1 {
        return Err(Error::InvalidConfig("kmeans_iters must be >= 1".into()));
    }
    if emb.n_items() == 0 {
        return Err(Error::EmptyInput("embedding matrix has no rows".into()));
    }
    let dim = emb.dim();
    let n = emb.n_items();
    let mut residuals: Vec<f64> = emb.data.clone();
    let mut book_layers = Vec::with_capacity(layers.len());
    let mut prev_mse = mean_sq_norm(&residuals, dim);

    for (layer_idx, &k) in layers.iter().enumerate() {
        if k > n {
            return Err(Error::InvalidInput(format!(
                "layer {layer_idx} wants {k} centroids from {n} points"
            )));
        }
        let distinct = distinct_rows(&residuals, dim);
        if k > distinct {
            return Err(Error::InvalidInput(format!(
                "layer {layer_idx} wants {k} centroids but residuals have only \
                 {distinct} distinct points"
            )));
        }
        let centroids = kmeans(
            &residuals,
            n,
            dim,
            k,
            kmeans_iters,
            seeds::substream2(seed, layer_idx as u64, 0),
        );
        // Greedy assignment defines this layer's contribution during fitting.
        let assignments = assign_all(&residuals, n, dim, &centroids, k);
        for (i, &a) in assignments.iter().enumerate() {
            let c = &centroids[a * dim..(a + 1) * dim];
            for (r, cv) in residuals[i * dim..(i + 1) * dim].iter_mut().zip(c) {
                *r -= cv;
            }
        }
        let mse = mean_sq_norm(&residuals, dim);
        debug_assert!(mse <= prev_mse + 1e-9 * prev_mse.max(1.0));
        prev_mse = mse;
        book_layers.push(CodebookLayer { centroids, k });
    }

    Ok(Codebook { layers: book_layers, dim })
}

fn mean_sq_norm(data: &[f64], dim: usize) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let n = data.len() / dim;
    data.chunks(dim).map(sq_norm).sum::<f64>() / n as f64
}

fn distinct_rows(data: &[f64], dim: usize) -> usize {
    let mut seen: BTreeSet<Vec<u64>> = BTreeSet::new();
    for row in data.chunks(dim) {
        seen.insert(row.iter().map(|v| v.to_bits()).collect());
    }
    seen.len()
}

fn assign_all(data: &[f64], n: usize, dim: usize, centroids: &[f64], k: usize) -> Vec<usize> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let row = &data[i * dim..(i + 1) * dim];
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let d = sq_dist(row, &centroids[c * dim..(c + 1) * dim]);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Seeded k-means++ init followed by Lloyd iterations.
fn kmeans(data: &[f64], n: usize, dim: usize, k: usize, iters: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeds::rng_for(seed);
    let mut centroids = vec![0.0f64; k * dim];

    // k-means++ seeding.
    let first = rng.random_range(0..n);
    centroids[..dim].copy_from_slice(&data[first * dim..(first + 1) * dim]);
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(&data[i * dim..(i + 1) * dim], &centroids[..dim]))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let chosen = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                u -= w;
                if u <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // All residual mass at already-chosen points; distinct-count
            // checks upstream make this unreachable, but stay deterministic.
            c % n
        };
        let row = &data[chosen * dim..(chosen + 1) * dim];
        centroids[c * dim..(c + 1) * dim].copy_from_slice(row);
        for i in 0..n {
            let d = sq_dist(&data[i * dim..(i + 1) * dim], row);
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }

    let mut assignments = vec![0usize; n];
    for _ in 0..iters {
        let new_assignments = assign_all(data, n, dim, &centroids, k);
        let changed = new_assignments != assignments;
        assignments = new_assignments;

        // Ordered accumulation keeps the update worker-count independent.
        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            for (s, v) in sums[a * dim..(a + 1) * dim]
                .iter_mut()
                .zip(&data[i * dim..(i + 1) * dim])
            {
                *s += v;
            }
        }
        let mut taken: BTreeSet<usize> = BTreeSet::new();
        for c in 0..k {
            if counts[c] > 0 {
                for (dst, s) in centroids[c * dim..(c + 1) * dim].iter_mut().zip(
                    &sums[c * dim..(c + 1) * dim],
                ) {
                    *dst = s / counts[c] as f64;
                }
            } else {
                // Re-seed an empty cluster from the farthest point.
                let mut far = 0usize;
                let mut far_d = -1.0;
                for i in 0..n {
                    if taken.contains(&i) {
                        continue;
                    }
                    let a = assignments[i];
                    let d = sq_dist(
                        &data[i * dim..(i + 1) * dim],
                        &centroids[a * dim..(a + 1) * dim],
                    );
                    if d > far_d {
                        far_d = d;
                        far = i;
                    }
                }
                taken.insert(far);
                centroids[c * dim..(c + 1) * dim]
                    .copy_from_slice(&data[far * dim..(far + 1) * dim]);
            }
        }
        if !changed {
            break;
        }
    }
    centroids
}

/// Encode every row in parallel.
pub fn encode_all(emb: &EmbeddingMatrix, book: &Codebook, beam: usize) -> Result<Vec<SemanticId>> {
    (0..emb.n_items())
        .into_par_iter()
        .map(|i| book.encode(emb.row(i), beam))
        .collect()
}

/// Fraction of items without a unique id: `(n - distinct) / n`.
pub fn collision_rate(ids: &[SemanticId]) -> Result<f64> {
    if ids.is_empty() {
        return Err(Error::EmptyInput("no ids to measure collisions on".into()));
    }
    let distinct: BTreeSet<&SemanticId> = ids.iter().collect();
    Ok((ids.len() - distinct.len()) as f64 / ids.len() as f64)
}

/// Item id to rendered REC tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SemanticIdMap {
    pub entries: BTreeMap<String, Vec<String>>,
}

impl SemanticIdMap {
    pub fn build(items: &[String], ids: &[SemanticId], book: &Codebook) -> Result<SemanticIdMap> {
        if items.len() != ids.len() {
            return Err(Error::InvalidInput(format!(
                "{} items but {} ids",
                items.len(),
                ids.len()
            )));
        }
        let mut entries = BTreeMap::new();
        for (item, id) in items.iter().zip(ids) {
            entries.insert(item.clone(), book.render_tokens(id)?);
        }
        Ok(SemanticIdMap { entries })
    }

    pub fn tokens_for(&self, item: &str) -> Option<&[String]> {
        self.entries.get(item).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
struct IdMapRecord {
    item: String,
    tokens: Vec<String>,
}

pub fn write_id_map(path: &Path, map: &SemanticIdMap) -> Result<()> {
    jsonl::write_jsonl(
        path,
        map.entries
            .iter()
            .map(|(item, tokens)| IdMapRecord { item: item.clone(), tokens: tokens.clone() }),
    )
}

pub fn read_id_map(path: &Path) -> Result<SemanticIdMap> {
    let records: Vec<IdMapRecord> = jsonl::read_jsonl(path)?;
    let mut entries = BTreeMap::new();
    for r in records {
        entries.insert(r.item, r.tokens);
    }
    Ok(SemanticIdMap { entries })
}

/// Write the embedding file: magic, version, n, dim, then row-major
/// little-endian f32 values.
pub fn write_embeddings(path: &Path, emb: &EmbeddingMatrix) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(EMBEDDING_MAGIC).map_err(|e| Error::io(path, e))?;
    w.write_all(&EMBEDDING_FORMAT_VERSION.to_le_bytes())
        .map_err(|e| Error::io(path, e))?;
    w.write_all(&(emb.n_items() as u64).to_le_bytes())
        .map_err(|e| Error::io(path, e))?;
    w.write_all(&(emb.dim() as u64).to_le_bytes())
        .map_err(|e| Error::io(path, e))?;
    for &v in &emb.data {
        w.write_all(&(v as f32).to_le_bytes()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != EMBEDDING_MAGIC {
        return Err(Error::format(path, "bad magic, not an embedding file"));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4).map_err(|e| Error::io(path, e))?;
    let version = u32::from_le_bytes(b4);
    if version != EMBEDDING_FORMAT_VERSION {
        return Err(Error::format(path, format!("unsupported embedding version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8).map_err(|e| Error::io(path, e))?;
    let n = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8).map_err(|e| Error::io(path, e))?;
    let dim = u64::from_le_bytes(b8) as usize;
    let mut data = Vec::with_capacity(n * dim);
    for _ in 0..n * dim {
        r.read_exact(&mut b4).map_err(|e| Error::io(path, e))?;
        data.push(f32::from_le_bytes(b4) as f64);
    }
    EmbeddingMatrix::new(n, dim, data)
}

/// Item-id sidecar: one id per line, row order matching the embedding file.
pub fn read_item_ids(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut ids = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let id = line.trim_end_matches('\r').to_string();
        if id.is_empty() {
            return Err(Error::parse(path, idx + 1, "empty item id"));
        }
        ids.push(id);
    }
    Ok(ids)
}

pub fn write_item_ids(path: &Path, ids: &[String]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for id in ids {
        writeln!(w, "{id}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_codebook(path: &Path, book: &Codebook) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(CODEBOOK_MAGIC).map_err(|e| Error::io(path, e))?;
    w.write_all(&CODEBOOK_FORMAT_VERSION.to_le_bytes())
        .map_err(|e| Error::io(path, e))?;
    w.write_all(&(book.dim as u64).to_le_bytes()).map_err(|e| Error::io(path, e))?;
    w.write_all(&(book.layers.len() as u64).to_le_bytes())
        .map_err(|e| Error::io(path, e))?;
    for layer in &book.layers {
        w.write_all(&(layer.k as u64).to_le_bytes()).map_err(|e| Error::io(path, e))?;
        for &v in &layer.centroids {
            w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_codebook(path: &Path) -> Result<Codebook> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != CODEBOOK_MAGIC {
        return Err(Error::format(path, "bad magic, not a codebook file"));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4).map_err(|e| Error::io(path, e))?;
    let version = u32::from_le_bytes(b4);
    if version != CODEBOOK_FORMAT_VERSION {
        return Err(Error::format(path, format!("unsupported codebook version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8).map_err(|e| Error::io(path, e))?;
    let dim = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8).map_err(|e| Error::io(path, e))?;
    let n_layers = u64::from_le_bytes(b8) as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        r.read_exact(&mut b8).map_err(|e| Error::io(path, e))?;
        let k = u64::from_le_bytes(b8) as usize;
        let mut centroids = Vec::with_capacity(k * dim);
        for _ in 0..k * dim {
            r.read_exact(&mut b8).map_err(|e| Error::io(path, e))?;
            centroids.push(f64::from_le_bytes(b8));
        }
        layers.push(CodebookLayer { centroids, k });
    }
    Ok(Codebook { layers, dim })
}
