//! Train-on-synthetic / train-on-real evaluation with lightweight
//! next-item baselines.
//!
//! The baselines are count-based (markov bigram, item-kNN over session
//! co-occurrence, popularity); the model interface is a ranked-list scorer so
//! heavier backends can attach externally. Evaluation is leave-one-out: each
//! test session's last item is predicted from the preceding prefix, and
//! Recall@K is the fraction of sessions whose target lands in the top K.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::SessionizedLog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    MarkovBigram,
    ItemKnn,
    Popularity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalSetting {
    #[serde(rename = "TSTR")]
    Tstr,
    #[serde(rename = "TRTR")]
    Trtr,
}

#[derive(Debug, Clone)]
pub struct NextItemModel {
    kind: BaselineKind,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    /// Item indices by (occurrence count desc, index asc).
    popularity_order: Vec<u32>,
    /// Per-item outgoing bigram counts, sorted (count desc, target asc).
    markov_rows: Vec<Vec<(u32, u64)>>,
    /// Per-item cosine similarity over session co-occurrence, sorted
    /// (similarity desc, target asc).
    knn_rows: Vec<Vec<(u32, f64)>>,
}

impl NextItemModel {
    pub fn kind(&self) -> BaselineKind {
        self.kind
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    /// Top-`k` ranked next items for a prefix, over the trained vocabulary.
    pub fn rank(&self, prefix: &[String], k: usize) -> Vec<&str> {
        self.rank_within(prefix, k, None)
    }

    /// Top-`k` ranked next items restricted to `candidates` when given.
    pub fn rank_within(
        &self,
        prefix: &[String],
        k: usize,
        candidates: Option<&BTreeSet<String>>,
    ) -> Vec<&str> {
        let allowed = |idx: u32| -> bool {
            candidates.is_none_or(|c| c.contains(&self.vocab[idx as usize]))
        };
        let mut out: Vec<u32> = Vec::with_capacity(k);
        let mut seen: Vec<bool> = vec![false; self.vocab.len()];
        let push = |idx: u32, out: &mut Vec<u32>, seen: &mut Vec<bool>| -> bool {
            if !seen[idx as usize] && allowed(idx) {
                seen[idx as usize] = true;
                out.push(idx);
            }
            out.len() >= k
        };

        match self.kind {
            BaselineKind::Popularity => {
                for &idx in &self.popularity_order {
                    if push(idx, &mut out, &mut seen) {
                        break;
                    }
                }
            }
            BaselineKind::MarkovBigram => {
                let last = prefix.last().and_then(|item| self.index.get(item));
                if let Some(&last) = last {
                    for &(tgt, _) in &self.markov_rows[last as usize] {
                        if push(tgt, &mut out, &mut seen) {
                            break;
                        }
                    }
                }
                // Popularity backoff for unseen antecedents and tail slots.
                if out.len() < k {
                    for &idx in &self.popularity_order {
                        if push(idx, &mut out, &mut seen) {
                            break;
                        }
                    }
                }
            }
            BaselineKind::ItemKnn => {
                let mut scores: HashMap<u32, f64> = HashMap::new();
                let mut prefix_ids: Vec<u32> = prefix
                    .iter()
                    .filter_map(|item| self.index.get(item).copied())
                    .collect();
                prefix_ids.sort_unstable();
                prefix_ids.dedup();
                for &p in &prefix_ids {
                    for &(tgt, sim) in &self.knn_rows[p as usize] {
                        *scores.entry(tgt).or_insert(0.0) += sim;
                    }
                }
                let mut ranked: Vec<(u32, f64)> = scores.into_iter().collect();
                ranked.sort_by(|a, b| {
                    b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0))
                });
                for (idx, _) in ranked {
                    if push(idx, &mut out, &mut seen) {
                        break;
                    }
                }
                if out.len() < k {
                    for &idx in &self.popularity_order {
                        if push(idx, &mut out, &mut seen) {
                            break;
                        }
                    }
                }
            }
        }
        out.into_iter().map(|idx| self.vocab[idx as usize].as_str()).collect()
    }
}

/// Train a count-based baseline on item sequences. Deterministic; ranking
/// ties always break by item index.
pub fn train_baseline(kind: BaselineKind, sequences: &[Vec<String>]) -> Result<NextItemModel> {
    if sequences.is_empty() {
        return Err(Error::EmptyInput("no training sequences".into()));
    }
    let mut vocab: BTreeSet<&str> = BTreeSet::new();
    for seq in sequences {
        for item in seq {
            vocab.insert(item);
        }
    }
    if vocab.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "training vocabulary needs >= 2 items, got {}",
            vocab.len()
        )));
    }
    let vocab: Vec<String> = vocab.into_iter().map(str::to_string).collect();
    let index: HashMap<String, u32> =
        vocab.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();
    let n = vocab.len();

    let mut occurrence = vec![0u64; n];
    let mut bigrams: HashMap<(u32, u32), u64> = HashMap::new();
    let mut cooc: HashMap<(u32, u32), u64> = HashMap::new();
    let mut session_freq = vec![0u64; n];
    for seq in sequences {
        let ids: Vec<u32> = seq.iter().map(|s| index[s]).collect();
        for &id in &ids {
            occurrence[id as usize] += 1;
        }
        for w in ids.windows(2) {
            *bigrams.entry((w[0], w[1])).or_insert(0) += 1;
        }
        let mut distinct = ids.clone();
        distinct.sort_unstable();
        distinct.dedup();
        for &id in &distinct {
            session_freq[id as usize] += 1;
        }
        for (i, &a) in distinct.iter().enumerate() {
            for &b in &distinct[i + 1..] {
                *cooc.entry((a, b)).or_insert(0) += 1;
            }
        }
    }

    let mut popularity_order: Vec<u32> = (0..n as u32).collect();
    popularity_order.sort_by(|&a, &b| {
        occurrence[b as usize]
            .cmp(&occurrence[a as usize])
            .then_with(|| a.cmp(&b))
    });

    let mut markov_rows: Vec<Vec<(u32, u64)>> = vec![Vec::new(); n];
    if kind == BaselineKind::MarkovBigram {
        for (&(a, b), &count) in &bigrams {
            markov_rows[a as usize].push((b, count));
        }
        for row in &mut markov_rows {
            row.sort_by(|x, y| y.1.cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
        }
    }

    let mut knn_rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
    if kind == BaselineKind::ItemKnn {
        for (&(a, b), &count) in &cooc {
            let denom =
                ((session_freq[a as usize] * session_freq[b as usize]) as f64).sqrt();
            let sim = count as f64 / denom;
            knn_rows[a as usize].push((b, sim));
            knn_rows[b as usize].push((a, sim));
        }
        for row in &mut knn_rows {
            row.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then_with(|| x.0.cmp(&y.0)));
        }
    }

    Ok(NextItemModel { kind, vocab, index, popularity_order, markov_rows, knn_rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub setting: EvalSetting,
    #[serde(rename = "recall")]
    pub recall_at: BTreeMap<usize, f64>,
    #[serde(rename = "n")]
    pub n_predictions: u64,
    pub skipped: u64,
}

fn validate_ks(ks: &[usize]) -> Result<()> {
    if ks.is_empty() {
        return Err(Error::InvalidConfig("empty K list".into()));
    }
    if ks.contains(&0) {
        return Err(Error::InvalidConfig("K values must be positive".into()));
    }
    if ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("K values must be sorted ascending".into()));
    }
    Ok(())
}

/// Leave-one-out Recall@K over the model's full trained vocabulary.
pub fn recall_at_k(
    model: &NextItemModel,
    test: &SessionizedLog,
    ks: &[usize],
    setting: EvalSetting,
) -> Result<EvalReport> {
    recall_within(model, test, ks, setting, None)
}

/// Leave-one-out Recall@K with the candidate set restricted, mirroring the
/// common-vocabulary filtering of the TSTR protocol.
pub fn recall_within(
    model: &NextItemModel,
    test: &SessionizedLog,
    ks: &[usize],
    setting: EvalSetting,
    candidates: Option<&BTreeSet<String>>,
) -> Result<EvalReport> {
    validate_ks(ks)?;
    if test.is_empty() {
        return Err(Error::EmptyInput("empty test log".into()));
    }
    let k_max = *ks.last().unwrap();
    let mut hits: BTreeMap<usize, u64> = ks.iter().map(|&k| (k, 0)).collect();
    let mut n_predictions = 0u64;
    let mut skipped = 0u64;
    for session in &test.sessions {
        if session.items.len() < 2 {
            skipped += 1;
            continue;
        }
        let (target, prefix) = session.items.split_last().unwrap();
        let ranked = model.rank_within(prefix, k_max, candidates);
        n_predictions += 1;
        if let Some(pos) = ranked.iter().position(|item| item == target) {
            for (&k, count) in hits.iter_mut() {
                if pos < k {
                    *count += 1;
                }
            }
        }
    }
    if n_predictions == 0 {
        return Err(Error::EmptyInput("no test session was long enough to evaluate".into()));
    }
    let recall_at = hits
        .into_iter()
        .map(|(k, h)| (k, h as f64 / n_predictions as f64))
        .collect();
    Ok(EvalReport { setting, recall_at, n_predictions, skipped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TstrTrtrReport {
    pub tstr: EvalReport,
    pub trtr: EvalReport,
}

/// Train one baseline on synthetic sequences and one on real sequences, then
/// evaluate both on the same real test set over the common vocabulary.
pub fn run_tstr_trtr(
    synthetic: &[Vec<String>],
    real_train: &[Vec<String>],
    real_test: &SessionizedLog,
    kind: BaselineKind,
    ks: &[usize],
    common_vocab: &BTreeSet<String>,
) -> Result<TstrTrtrReport> {
    validate_ks(ks)?;
    let tstr_model = train_baseline(kind, synthetic)?;
    let trtr_model = train_baseline(kind, real_train)?;
    let tstr = recall_within(&tstr_model, real_test, ks, EvalSetting::Tstr, Some(common_vocab))?;
    let trtr = recall_within(&trtr_model, real_test, ks, EvalSetting::Trtr, Some(common_vocab))?;
    Ok(TstrTrtrReport { tstr, trtr })
}
