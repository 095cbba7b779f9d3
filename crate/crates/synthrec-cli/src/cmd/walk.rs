use std::path::PathBuf;

use anyhow::Result;
use clap::Parser;

use synthrec::graph;
use synthrec::walks::{self, StartPolicy, WalkConfig, WalkOrder};

#[derive(Parser)]
pub struct Args {
    /// Binary graph file written by `graph`.
    #[arg(long)]
    pub graph: PathBuf,
    /// first or second (Node2Vec-biased).
    #[arg(long, default_value = "second")]
    pub order: String,
    /// Return parameter (second order only).
    #[arg(short, long, default_value_t = 1.0)]
    pub p: f64,
    /// In-out parameter (second order only).
    #[arg(short, long, default_value_t = 1.0)]
    pub q: f64,
    /// Per-step stop probability once min length is reached.
    #[arg(long, default_value_t = 0.15)]
    pub alpha_stop: f64,
    /// Minimum cumulative path confidence; below it a walk is rejected.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value_t = 2)]
    pub min_len: usize,
    #[arg(long, default_value_t = 50)]
    pub max_len: usize,
    #[arg(long)]
    pub n_walks: usize,
    #[arg(long)]
    pub seed: u64,
    /// Start-node policy: uniform or degree-weighted.
    #[arg(long, default_value = "uniform")]
    pub start: String,
    /// Output walks file (JSON-lines).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional generation report (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

pub(crate) fn parse_order(s: &str) -> Result<WalkOrder> {
    Ok(match s {
        "first" => WalkOrder::First,
        "second" => WalkOrder::Second,
        other => anyhow::bail!("order must be 'first' or 'second', got '{other}'"),
    })
}

pub(crate) fn parse_start(s: &str) -> Result<StartPolicy> {
    Ok(match s {
        "uniform" => StartPolicy::Uniform,
        "degree-weighted" => StartPolicy::DegreeWeighted,
        other => anyhow::bail!("start must be 'uniform' or 'degree-weighted', got '{other}'"),
    })
}

pub fn run(args: Args) -> Result<serde_json::Value> {
    let cfg = WalkConfig {
        order: parse_order(&args.order)?,
        p: args.p,
        q: args.q,
        alpha_stop: args.alpha_stop,
        path_conf_threshold: args.threshold,
        min_len: args.min_len,
        max_len: args.max_len,
        n_walks: args.n_walks,
        seed: args.seed,
        start_policy: parse_start(&args.start)?,
    };
    cfg.validate()?;
    let g = graph::read_graph(&args.graph)?;
    let (walks, report) = walks::generate_corpus_walks(&g, &cfg)?;
    walks::write_walks(&args.out, &walks, &g)?;
    if let Some(path) = &args.report {
        super::write_json(path, &report)?;
    }
    Ok(serde_json::json!({
        "cmd": "walk",
        "walks": report.n_walks,
        "accept_rate": report.accept_rate,
        "mean_len": report.mean_len,
        "unique_items": report.unique_items,
        "out": args.out,
    }))
}
