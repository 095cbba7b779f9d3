use std::path::PathBuf;

use anyhow::Result;
use clap::Parser;

use synthrec::graph;
use synthrec::rules;

#[derive(Parser)]
pub struct Args {
    /// Rules file written by `mine`.
    #[arg(long)]
    pub rules: PathBuf,
    /// Edge weight source: confidence, lift, or support.
    #[arg(long, default_value = "confidence")]
    pub weight: String,
    /// Add reverse edges where missing.
    #[arg(long, default_value_t = false)]
    pub symmetrize: bool,
    /// Output binary graph file.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional JSON-lines edge dump for inspection.
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<serde_json::Value> {
    let weight = super::parse_weight_source(&args.weight)?;
    let rule_set = rules::read_rules(&args.rules)?;
    let (mut g, stats) = graph::build_graph(&rule_set, weight)?;
    if args.symmetrize {
        g = graph::symmetrize(&g)?;
    }
    graph::write_graph(&args.out, &g)?;
    if let Some(dump) = &args.dump {
        graph::write_graph_dump(dump, &g)?;
    }
    Ok(serde_json::json!({
        "cmd": "graph",
        "nodes": g.node_count(),
        "edges": g.edge_count(),
        "self_loops_dropped": stats.self_loops_dropped,
        "out": args.out,
    }))
}
