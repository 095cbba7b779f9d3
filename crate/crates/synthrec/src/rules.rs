//! Pairwise association-rule mining over sessionized logs.
//!
//! Co-occurrence uses transaction set semantics: a pair counts once per
//! session containing both items, however often either repeats. Every
//! co-occurring pair yields two directed rules, one per antecedent choice;
//! direction matters because confidence divides by the antecedent's session
//! frequency and the downstream item graph is directed.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::SessionizedLog;
use crate::jsonl;

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationRule {
    pub antecedent: String,
    pub consequent: String,
    /// P(antecedent and consequent) over sessions.
    pub support: f64,
    /// P(consequent | antecedent).
    pub confidence: f64,
    /// confidence / P(consequent).
    pub lift: f64,
    /// Number of sessions containing both items.
    pub cooccur_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet {
    /// Sorted by (antecedent, consequent); each pair appears at most once.
    pub rules: Vec<AssociationRule>,
    pub n_sessions: u64,
    /// Sessions containing each item at least once.
    pub item_freq: BTreeMap<String, u64>,
}

impl RuleSet {
    /// Lift for a directed pair, if mined.
    pub fn lift_for(&self, antecedent: &str, consequent: &str) -> Option<f64> {
        self.rules
            .binary_search_by(|r| {
                (r.antecedent.as_str(), r.consequent.as_str()).cmp(&(antecedent, consequent))
            })
            .ok()
            .map(|idx| self.rules[idx].lift)
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Rebuild a `RuleSet` from bare rules, e.g. after deserialization.
    ///
    /// The session count and item frequencies are recovered from the rule
    /// statistics themselves (they are exact ratios of integers), so a
    /// serialize/deserialize round trip is lossless for every consumer.
    pub fn from_rules(rules: Vec<AssociationRule>) -> Result<RuleSet> {
        if rules.is_empty() {
            return Err(Error::EmptyInput("rule set has no rules".into()));
        }
        let mut rules = rules;
        rules.sort_by(|x, y| {
            (x.antecedent.as_str(), x.consequent.as_str())
                .cmp(&(y.antecedent.as_str(), y.consequent.as_str()))
        });
        for w in rules.windows(2) {
            if w[0].antecedent == w[1].antecedent && w[0].consequent == w[1].consequent {
                return Err(Error::InvalidInput(format!(
                    "duplicate rule {} -> {}",
                    w[0].antecedent, w[0].consequent
                )));
            }
        }
        let mut n_sessions: u64 = 0;
        let mut item_freq: BTreeMap<String, u64> = BTreeMap::new();
        for r in &rules {
            if r.support <= 0.0 || r.confidence <= 0.0 || r.lift <= 0.0 || r.cooccur_count == 0 {
                return Err(Error::InvalidInput(format!(
                    "rule {} -> {} has non-positive statistics",
                    r.antecedent, r.consequent
                )));
            }
            let n = (r.cooccur_count as f64 / r.support).round() as u64;
            n_sessions = n_sessions.max(n);
            let freq_a = (r.cooccur_count as f64 / r.confidence).round() as u64;
            item_freq
                .entry(r.antecedent.clone())
                .and_modify(|f| *f = (*f).max(freq_a))
                .or_insert(freq_a);
            // P(consequent) = confidence / lift.
            let freq_b = (r.confidence / r.lift * n as f64).round() as u64;
            item_freq
                .entry(r.consequent.clone())
                .and_modify(|f| *f = (*f).max(freq_b))
                .or_insert(freq_b);
        }
        Ok(RuleSet { rules, n_sessions, item_freq })
    }
}

/// Co-occurrence window policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    /// Two items co-occur if both appear anywhere in the session.
    WholeSession,
    /// Two items co-occur only if some occurrences lie within `k` positions
    /// of each other. Cheaper than whole-session on very long sessions.
    Adjacent(usize),
}

/// Mine every directed pairwise rule whose co-occurrence count reaches
/// `min_cooccur`.
pub fn mine_pairwise_rules(
    log: &SessionizedLog,
    min_cooccur: u64,
    window: Window,
) -> Result<RuleSet> {
    if min_cooccur < 1 {
        return Err(Error::InvalidConfig("min_cooccur must be >= 1".into()));
    }
    if let Window::Adjacent(k) = window {
        if k == 0 {
            return Err(Error::InvalidConfig("adjacent window size must be >= 1".into()));
        }
    }
    if log.is_empty() {
        return Err(Error::EmptyInput("cannot mine rules from an empty log".into()));
    }

    // Dense-intern the vocabulary once; counting works on u32 pairs.
    let items: Vec<&str> = log.vocab.iter().map(String::as_str).collect();
    let index: HashMap<&str, u32> =
        items.iter().enumerate().map(|(i, s)| (*s, i as u32)).collect();

    // Parallel map over sessions with an associative merge of integer count
    // maps; the result is independent of merge order.
    let (pair_counts, item_counts) = log
        .sessions
        .par_iter()
        .map(|session| {
            let mut pairs: HashMap<(u32, u32), u64> = HashMap::new();
            let mut singles: HashMap<u32, u64> = HashMap::new();
            let present = session_pairs(&session.items, &index, window);
            for &idx in &present.items {
                singles.insert(idx, 1);
            }
            for &(a, b) in &present.pairs {
                pairs.insert((a, b), 1);
            }
            (pairs, singles)
        })
        .reduce(
            || (HashMap::new(), HashMap::new()),
            |(mut pa, mut ia), (pb, ib)| {
                for (k, v) in pb {
                    *pa.entry(k).or_insert(0) += v;
                }
                for (k, v) in ib {
                    *ia.entry(k).or_insert(0) += v;
                }
                (pa, ia)
            },
        );

    let n_sessions = log.sessions.len() as u64;
    let n = n_sessions as f64;
    let mut rules = Vec::new();
    for (&(a, b), &co) in &pair_counts {
        if co < min_cooccur {
            continue;
        }
        let freq_a = item_counts[&a];
        let freq_b = item_counts[&b];
        let support = co as f64 / n;
        let confidence = co as f64 / freq_a as f64;
        let lift = confidence / (freq_b as f64 / n);
        rules.push(AssociationRule {
            antecedent: items[a as usize].to_string(),
            consequent: items[b as usize].to_string(),
            support,
            confidence,
            lift,
            cooccur_count: co,
        });
    }
    rules.sort_by(|x, y| {
        (x.antecedent.as_str(), x.consequent.as_str())
            .cmp(&(y.antecedent.as_str(), y.consequent.as_str()))
    });

    let item_freq = item_counts
        .into_iter()
        .map(|(idx, c)| (items[idx as usize].to_string(), c))
        .collect();

    Ok(RuleSet { rules, n_sessions, item_freq })
}

struct SessionPairs {
    items: Vec<u32>,
    /// Directed pairs, both orientations of every co-occurrence.
    pairs: Vec<(u32, u32)>,
}

fn session_pairs(items: &[String], index: &HashMap<&str, u32>, window: Window) -> SessionPairs {
    let ids: Vec<u32> = items.iter().map(|s| index[s.as_str()]).collect();
    let mut distinct = ids.clone();
    distinct.sort_unstable();
    distinct.dedup();

    let mut pairs: Vec<(u32, u32)> = Vec::new();
    match window {
        Window::WholeSession => {
            for (i, &a) in distinct.iter().enumerate() {
                for &b in &distinct[i + 1..] {
                    pairs.push((a, b));
                    pairs.push((b, a));
                }
            }
        }
        Window::Adjacent(k) => {
            for (i, &a) in ids.iter().enumerate() {
                for &b in ids.iter().skip(i + 1).take(k) {
                    if a != b {
                        pairs.push((a.min(b), a.max(b)));
                    }
                }
            }
            pairs.sort_unstable();
            pairs.dedup();
            let undirected = std::mem::take(&mut pairs);
            for (a, b) in undirected {
                pairs.push((a, b));
                pairs.push((b, a));
            }
        }
    }
    SessionPairs { items: distinct, pairs }
}

/// Prune a rule set by confidence and lift floors, then keep per antecedent
/// the `top_k` rules by confidence (ties: lift descending, then consequent
/// id ascending). `None` keeps all survivors.
pub fn filter_rules(
    rules: &RuleSet,
    min_confidence: f64,
    min_lift: f64,
    top_k_per_antecedent: Option<usize>,
) -> Result<RuleSet> {
    if min_confidence < 0.0 || min_lift < 0.0 {
        return Err(Error::InvalidConfig("thresholds must be non-negative".into()));
    }
    let mut by_antecedent: BTreeMap<&str, Vec<&AssociationRule>> = BTreeMap::new();
    for r in &rules.rules {
        if r.confidence >= min_confidence && r.lift >= min_lift {
            by_antecedent.entry(r.antecedent.as_str()).or_default().push(r);
        }
    }
    let mut kept = Vec::new();
    for (_, mut group) in by_antecedent {
        group.sort_by(|x, y| {
            y.confidence
                .partial_cmp(&x.confidence)
                .unwrap()
                .then(y.lift.partial_cmp(&x.lift).unwrap())
                .then(x.consequent.cmp(&y.consequent))
        });
        if let Some(k) = top_k_per_antecedent {
            group.truncate(k);
        }
        kept.extend(group.into_iter().cloned());
    }
    kept.sort_by(|x, y| {
        (x.antecedent.as_str(), x.consequent.as_str())
            .cmp(&(y.antecedent.as_str(), y.consequent.as_str()))
    });
    Ok(RuleSet {
        rules: kept,
        n_sessions: rules.n_sessions,
        item_freq: rules.item_freq.clone(),
    })
}

#[derive(Serialize, Deserialize)]
struct RuleRecord {
    a: String,
    b: String,
    support: f64,
    confidence: f64,
    lift: f64,
    n: u64,
}

pub fn write_rules(path: &Path, rules: &RuleSet) -> Result<()> {
    jsonl::write_jsonl(
        path,
        rules.rules.iter().map(|r| RuleRecord {
            a: r.antecedent.clone(),
            b: r.consequent.clone(),
            support: r.support,
            confidence: r.confidence,
            lift: r.lift,
            n: r.cooccur_count,
        }),
    )
}

pub fn read_rules(path: &Path) -> Result<RuleSet> {
    let records: Vec<RuleRecord> = jsonl::read_jsonl(path)?;
    RuleSet::from_rules(
        records
            .into_iter()
            .map(|r| AssociationRule {
                antecedent: r.a,
                consequent: r.b,
                support: r.support,
                confidence: r.confidence,
                lift: r.lift,
                cooccur_count: r.n,
            })
            .collect(),
    )
}
