use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Parser;

use synthrec::corpus::{self, CorpusDoc};
use synthrec::graph;
use synthrec::rules;
use synthrec::tokenizer;
use synthrec::walks;

#[derive(Parser)]
pub struct Args {
    /// Document kind: item-text, cf, or uih.
    #[arg(long)]
    pub kind: String,
    /// Semantic id map (all kinds).
    #[arg(long)]
    pub id_map: PathBuf,
    /// Item descriptions, JSON-lines {"item", "description"} (item-text).
    #[arg(long)]
    pub descriptions: Option<PathBuf>,
    /// Rules file (cf).
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Walks file (uih).
    #[arg(long)]
    pub walks: Option<PathBuf>,
    /// Graph file to resolve walk node ids (uih).
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Output corpus, one document per line.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> Result<serde_json::Value> {
    let id_map = tokenizer::read_id_map(&args.id_map)?;
    let docs: Vec<CorpusDoc> = match args.kind.as_str() {
        "item-text" => {
            let path = args.descriptions.context("--descriptions required for item-text")?;
            let descriptions = corpus::read_descriptions(&path)?;
            render_item_text(&id_map, &descriptions)?
        }
        "cf" => {
            let path = args.rules.context("--rules required for cf")?;
            let rule_set = rules::read_rules(&path)?;
            render_cf(&rule_set, &id_map)?
        }
        "uih" => {
            let wpath = args.walks.context("--walks required for uih")?;
            let gpath = args.graph.context("--graph required for uih")?;
            let g = graph::read_graph(&gpath)?;
            let walk_list = walks::read_walks(&wpath, &g)?;
            render_uih(&walk_list, &g, &id_map)?
        }
        other => bail!("kind must be item-text|cf|uih, got '{other}'"),
    };
    corpus::write_corpus(&args.out, &docs)?;
    let tokens: u64 = docs.iter().map(|d| d.token_count).sum();
    Ok(serde_json::json!({
        "cmd": "render",
        "kind": args.kind,
        "docs": docs.len(),
        "tokens": tokens,
        "out": args.out,
    }))
}

/// One alignment document per item that has both an id and a description.
pub fn render_item_text(
    id_map: &tokenizer::SemanticIdMap,
    descriptions: &std::collections::BTreeMap<String, String>,
) -> Result<Vec<CorpusDoc>> {
    let mut docs = Vec::new();
    for (item, tokens) in &id_map.entries {
        if let Some(desc) = descriptions.get(item) {
            docs.push(corpus::render_item_text(tokens, desc)?);
        }
    }
    if docs.is_empty() {
        bail!("no item has both a semantic id and a description");
    }
    Ok(docs)
}

pub fn render_cf(
    rule_set: &rules::RuleSet,
    id_map: &tokenizer::SemanticIdMap,
) -> Result<Vec<CorpusDoc>> {
    let mut docs = Vec::new();
    for rule in &rule_set.rules {
        let (Some(a), Some(b)) = (
            id_map.tokens_for(&rule.antecedent),
            id_map.tokens_for(&rule.consequent),
        ) else {
            continue;
        };
        docs.push(corpus::render_cf_statement(rule, a, b)?);
    }
    if docs.is_empty() {
        bail!("no rule has semantic ids for both endpoints");
    }
    Ok(docs)
}

pub fn render_uih(
    walk_list: &[walks::Walk],
    g: &graph::ItemGraph,
    id_map: &tokenizer::SemanticIdMap,
) -> Result<Vec<CorpusDoc>> {
    let mut docs = Vec::with_capacity(walk_list.len());
    for walk in walk_list {
        docs.push(corpus::render_uih(walk, g, id_map)?);
    }
    if docs.is_empty() {
        bail!("no walks to render");
    }
    Ok(docs)
}
