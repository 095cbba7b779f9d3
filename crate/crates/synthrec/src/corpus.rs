//! Training-document rendering and mixture composition.
//!
//! The three document kinds are bijective templates: every rendered document
//! re-parses to its components and re-renders byte-identically. To keep the
//! grammars unambiguous, REC tokens must match `REC[0-9]+` and descriptions
//! may not contain the RECTOKEN delimiters.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ItemGraph;
use crate::rules::AssociationRule;
use crate::seeds;
use crate::tokenizer::SemanticIdMap;
use crate::walks::Walk;

const OPEN: &str = "<RECTOKEN>";
const CLOSE: &str = "</RECTOKEN>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocKind {
    ItemText,
    CfStatement,
    Uih,
    /// Opaque pass-through text (e.g. a general-domain corpus); no grammar.
    General,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusDoc {
    pub kind: DocKind,
    pub text: String,
    pub token_count: u64,
}

impl CorpusDoc {
    /// Whitespace token counting; supply [`CorpusDoc::with_counter`] to plug
    /// in a real tokenizer.
    pub fn new(kind: DocKind, text: String) -> CorpusDoc {
        let token_count = whitespace_tokens(&text);
        CorpusDoc { kind, text, token_count }
    }

    pub fn with_counter(kind: DocKind, text: String, counter: &dyn Fn(&str) -> u64) -> CorpusDoc {
        let token_count = counter(&text);
        CorpusDoc { kind, text, token_count }
    }
}

pub fn whitespace_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

fn validate_token(token: &str) -> Result<()> {
    let ok = token
        .strip_prefix("REC")
        .map(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
        .unwrap_or(false);
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("'{token}' is not a REC token")))
    }
}

fn validate_tokens(tokens: &[String]) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::InvalidInput("empty token list".into()));
    }
    for t in tokens {
        validate_token(t)?;
    }
    Ok(())
}

/// `This item <RECTOKEN> T1 .. Tn </RECTOKEN> is described as {description}.`
pub fn render_item_text(tokens: &[String], description: &str) -> Result<CorpusDoc> {
    validate_tokens(tokens)?;
    if description.is_empty() {
        return Err(Error::InvalidInput("empty item description".into()));
    }
    if description.contains(OPEN) || description.contains(CLOSE) {
        return Err(Error::InvalidInput(
            "description may not contain RECTOKEN delimiters".into(),
        ));
    }
    let text = format!(
        "This item {OPEN} {} {CLOSE} is described as {description}.",
        tokens.join(" ")
    );
    Ok(CorpusDoc::new(DocKind::ItemText, text))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedItemText {
    pub tokens: Vec<String>,
    pub description: String,
}

pub fn parse_item_text(text: &str) -> Result<ParsedItemText> {
    let bad = |msg: &str| Error::InvalidInput(format!("not an item-text document: {msg}"));
    let rest = text
        .strip_prefix(&format!("This item {OPEN} "))
        .ok_or_else(|| bad("missing prefix"))?;
    let mid = format!(" {CLOSE} is described as ");
    let split_at = rest.find(&mid).ok_or_else(|| bad("missing delimiter"))?;
    let token_str = &rest[..split_at];
    let tail = &rest[split_at + mid.len()..];
    let description = tail.strip_suffix('.').ok_or_else(|| bad("missing final period"))?;
    let tokens: Vec<String> = token_str.split(' ').map(str::to_string).collect();
    validate_tokens(&tokens)?;
    if description.is_empty() {
        return Err(bad("empty description"));
    }
    if description.contains(OPEN) || description.contains(CLOSE) {
        return Err(bad("description contains delimiters"));
    }
    Ok(ParsedItemText { tokens, description: description.to_string() })
}

/// CF statement with the fixed numeric formatting: percent to 1 decimal,
/// confidence to 3, lift to 2.
pub fn render_cf_statement(
    rule: &AssociationRule,
    a_tokens: &[String],
    b_tokens: &[String],
) -> Result<CorpusDoc> {
    render_cf_parts(a_tokens, b_tokens, rule.confidence, rule.lift)
}

pub fn render_cf_parts(
    a_tokens: &[String],
    b_tokens: &[String],
    confidence: f64,
    lift: f64,
) -> Result<CorpusDoc> {
    validate_tokens(a_tokens)?;
    validate_tokens(b_tokens)?;
    if !(confidence > 0.0 && confidence <= 1.0) {
        return Err(Error::InvalidInput(format!("confidence {confidence} outside (0, 1]")));
    }
    if !(lift >= 0.0 && lift.is_finite()) {
        return Err(Error::InvalidInput(format!("lift {lift} invalid")));
    }
    let text = format!(
        "When a user interacts with item {OPEN} {} {CLOSE}, there is a {:.1}% probability \
         they will also interact with item {OPEN} {} {CLOSE} (confidence: {:.3}, lift: {:.2})",
        a_tokens.join(" "),
        confidence * 100.0,
        b_tokens.join(" "),
        confidence,
        lift,
    );
    Ok(CorpusDoc::new(DocKind::CfStatement, text))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCfStatement {
    pub a_tokens: Vec<String>,
    pub b_tokens: Vec<String>,
    pub confidence: f64,
    pub lift: f64,
}

pub fn parse_cf_statement(text: &str) -> Result<ParsedCfStatement> {
    let bad = |msg: &str| Error::InvalidInput(format!("not a CF statement: {msg}"));
    let rest = text
        .strip_prefix(&format!("When a user interacts with item {OPEN} "))
        .ok_or_else(|| bad("missing prefix"))?;
    let mid1 = format!(" {CLOSE}, there is a ");
    let p1 = rest.find(&mid1).ok_or_else(|| bad("missing first delimiter"))?;
    let a_str = &rest[..p1];
    let rest = &rest[p1 + mid1.len()..];
    let mid2 = format!("% probability they will also interact with item {OPEN} ");
    let p2 = rest.find(&mid2).ok_or_else(|| bad("missing percent delimiter"))?;
    let percent_str = &rest[..p2];
    let rest = &rest[p2 + mid2.len()..];
    let mid3 = format!(" {CLOSE} (confidence: ");
    let p3 = rest.find(&mid3).ok_or_else(|| bad("missing confidence delimiter"))?;
    let b_str = &rest[..p3];
    let rest = &rest[p3 + mid3.len()..];
    let p4 = rest.find(", lift: ").ok_or_else(|| bad("missing lift delimiter"))?;
    let conf_str = &rest[..p4];
    let lift_str = rest[p4 + ", lift: ".len()..]
        .strip_suffix(')')
        .ok_or_else(|| bad("missing closing parenthesis"))?;

    let confidence: f64 = conf_str.parse().map_err(|_| bad("bad confidence number"))?;
    let lift: f64 = lift_str.parse().map_err(|_| bad("bad lift number"))?;
    // The percent figure is derived from the confidence; an inconsistent
    // pair is outside the grammar.
    if format!("{:.1}", confidence * 100.0) != percent_str {
        return Err(bad("percent inconsistent with confidence"));
    }
    if format!("{confidence:.3}") != conf_str || format!("{lift:.2}") != lift_str {
        return Err(bad("numbers not in canonical formatting"));
    }
    let a_tokens: Vec<String> = a_str.split(' ').map(str::to_string).collect();
    let b_tokens: Vec<String> = b_str.split(' ').map(str::to_string).collect();
    validate_tokens(&a_tokens)?;
    validate_tokens(&b_tokens)?;
    Ok(ParsedCfStatement { a_tokens, b_tokens, confidence, lift })
}

/// `A user interacted with the following sequence of items: <RECTOKEN> .. </RECTOKEN>, ..`
/// Comma-space separated groups, no trailing period.
pub fn render_uih_tokens(groups: &[Vec<String>]) -> Result<CorpusDoc> {
    if groups.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "a user history needs at least 2 items, got {}",
            groups.len()
        )));
    }
    for g in groups {
        validate_tokens(g)?;
    }
    let rendered: Vec<String> =
        groups.iter().map(|g| format!("{OPEN} {} {CLOSE}", g.join(" "))).collect();
    let text = format!(
        "A user interacted with the following sequence of items: {}",
        rendered.join(", ")
    );
    Ok(CorpusDoc::new(DocKind::Uih, text))
}

/// Render a walk by expanding each item through the id map.
pub fn render_uih(walk: &Walk, graph: &ItemGraph, id_map: &SemanticIdMap) -> Result<CorpusDoc> {
    let mut groups = Vec::with_capacity(walk.len());
    for &node in &walk.items {
        let item = graph.item(node);
        let tokens = id_map
            .tokens_for(item)
            .ok_or_else(|| Error::InvalidInput(format!("item '{item}' missing from id map")))?;
        groups.push(tokens.to_vec());
    }
    render_uih_tokens(&groups)
}

pub fn parse_uih(text: &str) -> Result<Vec<Vec<String>>> {
    let bad = |msg: &str| Error::InvalidInput(format!("not a user-history document: {msg}"));
    let mut rest = text
        .strip_prefix("A user interacted with the following sequence of items: ")
        .ok_or_else(|| bad("missing prefix"))?;
    let mut groups = Vec::new();
    loop {
        let body = rest
            .strip_prefix(&format!("{OPEN} "))
            .ok_or_else(|| bad("expected a RECTOKEN group"))?;
        let end = body.find(&format!(" {CLOSE}")).ok_or_else(|| bad("unterminated group"))?;
        let tokens: Vec<String> = body[..end].split(' ').map(str::to_string).collect();
        validate_tokens(&tokens)?;
        groups.push(tokens);
        let after = &body[end + CLOSE.len() + 1..];
        if after.is_empty() {
            break;
        }
        rest = after.strip_prefix(", ").ok_or_else(|| bad("bad group separator"))?;
    }
    if groups.len() < 2 {
        return Err(bad("fewer than 2 items"));
    }
    Ok(groups)
}

/// One domain of a training mixture.
#[derive(Debug, Clone)]
pub struct MixtureDomain {
    pub name: String,
    pub ratio: f64,
    pub docs: Vec<CorpusDoc>,
    unique_tokens_override: Option<u64>,
}

impl MixtureDomain {
    pub fn new(name: impl Into<String>, ratio: f64, docs: Vec<CorpusDoc>) -> MixtureDomain {
        MixtureDomain { name: name.into(), ratio, docs, unique_tokens_override: None }
    }

    /// Arithmetic-only domain carrying just a unique-token count; usable by
    /// [`estimate_repeats`] but not by [`compose_mixture`].
    pub fn from_unique_tokens(
        name: impl Into<String>,
        ratio: f64,
        unique_tokens: u64,
    ) -> MixtureDomain {
        MixtureDomain {
            name: name.into(),
            ratio,
            docs: Vec::new(),
            unique_tokens_override: Some(unique_tokens),
        }
    }

    pub fn unique_tokens(&self) -> u64 {
        self.unique_tokens_override
            .unwrap_or_else(|| self.docs.iter().map(|d| d.token_count).sum())
    }
}

#[derive(Debug, Clone)]
pub struct MixtureSpec {
    pub domains: Vec<MixtureDomain>,
    pub total_token_budget: u64,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.total_token_budget == 0 {
            problems.push("token budget must be positive".to_string());
        }
        if self.domains.is_empty() {
            problems.push("mixture needs at least one domain".to_string());
        }
        for d in &self.domains {
            if !(0.0..=1.0).contains(&d.ratio) {
                problems.push(format!("domain '{}' ratio {} outside [0, 1]", d.name, d.ratio));
            }
        }
        let sum: f64 = self.domains.iter().map(|d| d.ratio).sum();
        if (sum - 1.0).abs() > 1e-9 {
            problems.push(format!("ratios sum to {sum}, expected 1"));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainReport {
    pub name: String,
    pub ratio: f64,
    pub unique_tokens: u64,
    pub realized_tokens: u64,
    pub realized_share: f64,
    pub docs_emitted: u64,
    pub epochs_started: u64,
    /// budget * ratio / unique_tokens: end-of-training exposure count.
    pub repeats: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureReport {
    pub total_tokens: u64,
    pub domains: Vec<DomainReport>,
}

/// Expected end-of-training repeats per domain:
/// `budget * ratio / unique_tokens`. A zero-ratio domain repeats 0 times.
pub fn estimate_repeats(spec: &MixtureSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    spec.domains
        .iter()
        .map(|d| {
            if d.ratio == 0.0 {
                return Ok(0.0);
            }
            let unique = d.unique_tokens();
            if unique == 0 {
                return Err(Error::InvalidInput(format!(
                    "domain '{}' has no unique tokens",
                    d.name
                )));
            }
            Ok(spec.total_token_budget as f64 * d.ratio / unique as f64)
        })
        .collect()
}

/// Interleave domain documents into one token-budgeted stream.
///
/// Each domain is emitted until its realized token count reaches
/// `budget * ratio`; a domain smaller than its share is repeated in
/// epoch-shuffled order (seeded per domain and epoch). At every step the
/// most-behind domain (lowest realized/target fraction, ties by domain
/// order) emits next, so the stream stays well mixed and byte-deterministic.
pub fn compose_mixture(spec: &MixtureSpec, seed: u64) -> Result<(Vec<CorpusDoc>, MixtureReport)> {
    spec.validate()?;
    for d in &spec.domains {
        if d.ratio > 0.0 && d.docs.is_empty() {
            return Err(Error::EmptyInput(format!(
                "domain '{}' has ratio {} but an empty corpus",
                d.name, d.ratio
            )));
        }
        // A domain of zero-token documents could never meet its target.
        if d.ratio > 0.0 && d.docs.iter().all(|doc| doc.token_count == 0) {
            return Err(Error::InvalidInput(format!(
                "domain '{}' contains only zero-token documents",
                d.name
            )));
        }
    }

    struct Cursor {
        target: f64,
        realized: u64,
        emitted: u64,
        epoch: u64,
        order: Vec<usize>,
        pos: usize,
    }
    let mut cursors: Vec<Cursor> = spec
        .domains
        .iter()
        .map(|d| Cursor {
            target: spec.total_token_budget as f64 * d.ratio,
            realized: 0,
            emitted: 0,
            epoch: 0,
            order: Vec::new(),
            pos: 0,
        })
        .collect();

    let mut out = Vec::new();
    loop {
        let mut next: Option<(usize, f64)> = None;
        for (i, c) in cursors.iter().enumerate() {
            if c.target <= 0.0 || (c.realized as f64) >= c.target {
                continue;
            }
            let frac = c.realized as f64 / c.target;
            if next.is_none_or(|(_, best)| frac < best) {
                next = Some((i, frac));
            }
        }
        let Some((d_idx, _)) = next else { break };
        let domain = &spec.domains[d_idx];
        let c = &mut cursors[d_idx];
        if c.pos >= c.order.len() {
            // New epoch: reshuffle.
            c.order = (0..domain.docs.len()).collect();
            let mut rng = seeds::rng_for(seeds::substream2(seed, d_idx as u64, c.epoch));
            c.order.shuffle(&mut rng);
            c.epoch += 1;
            c.pos = 0;
        }
        let doc = &domain.docs[c.order[c.pos]];
        c.pos += 1;
        c.realized += doc.token_count;
        c.emitted += 1;
        out.push(doc.clone());
    }

    let total_tokens: u64 = cursors.iter().map(|c| c.realized).sum();
    let repeats = estimate_repeats(spec)?;
    let domains = spec
        .domains
        .iter()
        .zip(&cursors)
        .zip(repeats)
        .map(|((d, c), rep)| DomainReport {
            name: d.name.clone(),
            ratio: d.ratio,
            unique_tokens: d.unique_tokens(),
            realized_tokens: c.realized,
            realized_share: if total_tokens > 0 {
                c.realized as f64 / total_tokens as f64
            } else {
                0.0
            },
            docs_emitted: c.emitted,
            epochs_started: c.epoch,
            repeats: rep,
        })
        .collect();
    Ok((out, MixtureReport { total_tokens, domains }))
}

/// Write a corpus as plain text, one document per line. Internal newlines
/// and backslashes are escaped reversibly.
pub fn write_corpus(path: &Path, docs: &[CorpusDoc]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for doc in docs {
        let escaped = doc.text.replace('\\', "\\\\").replace('\n', "\\n");
        writeln!(w, "{escaped}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a corpus written by [`write_corpus`]. Token counts are recomputed
/// with the whitespace counter.
pub fn read_corpus(path: &Path, kind: DocKind) -> Result<Vec<CorpusDoc>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut docs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut text = String::with_capacity(line.len());
        let mut chars = line.chars();
        while let Some(ch) = chars.next() {
            if ch == '\\' {
                match chars.next() {
                    Some('n') => text.push('\n'),
                    Some('\\') => text.push('\\'),
                    other => {
                        return Err(Error::parse(
                            path,
                            idx + 1,
                            format!("bad escape sequence '\\{}'", other.unwrap_or(' ')),
                        ))
                    }
                }
            } else {
                text.push(ch);
            }
        }
        if text.is_empty() {
            return Err(Error::parse(path, idx + 1, "empty document line"));
        }
        docs.push(CorpusDoc::new(kind, text));
    }
    Ok(docs)
}

/// Per-document descriptions input: JSON-lines `{"item": ..., "description": ...}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemDescription {
    pub item: String,
    pub description: String,
}

pub fn read_descriptions(path: &Path) -> Result<BTreeMap<String, String>> {
    let records: Vec<ItemDescription> = crate::jsonl::read_jsonl(path)?;
    Ok(records.into_iter().map(|r| (r.item, r.description)).collect())
}
