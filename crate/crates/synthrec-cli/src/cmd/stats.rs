use std::path::PathBuf;

use anyhow::Result;
use clap::Parser;

use synthrec::graph;
use synthrec::metrics;
use synthrec::rules;
use synthrec::tokenizer;
use synthrec::walks;

#[derive(Parser)]
pub struct Args {
    /// Walks file (JSON-lines).
    #[arg(long)]
    pub walks: PathBuf,
    /// Graph file the walks were generated on.
    #[arg(long)]
    pub graph: PathBuf,
    /// Rules file (for the lift column).
    #[arg(long)]
    pub rules: PathBuf,
    /// Semantic id map (for the token column).
    #[arg(long)]
    pub id_map: PathBuf,
    /// Output stats report (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> Result<serde_json::Value> {
    let g = graph::read_graph(&args.graph)?;
    let walk_list = walks::read_walks(&args.walks, &g)?;
    let rule_set = rules::read_rules(&args.rules)?;
    let id_map = tokenizer::read_id_map(&args.id_map)?;
    let stats = metrics::corpus_stats(&walk_list, &g, &rule_set, &id_map)?;
    super::write_json(&args.out, &stats)?;
    Ok(serde_json::json!({
        "cmd": "stats",
        "n_walks": stats.n_walks,
        "mean_length": stats.mean_length,
        "item_gini": stats.item_gini,
        "geom_lift": stats.geom_lift,
        "out": args.out,
    }))
}
