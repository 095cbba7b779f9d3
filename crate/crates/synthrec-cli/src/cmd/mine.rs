use std::path::PathBuf;

use anyhow::Result;
use clap::Parser;

use synthrec::ingest;
use synthrec::rules;

#[derive(Parser)]
pub struct Args {
    /// Sessions file written by `ingest`.
    #[arg(long)]
    pub sessions: PathBuf,
    /// Minimum number of co-occurring sessions for a rule.
    #[arg(long, default_value_t = 2)]
    pub min_cooccur: u64,
    /// Co-occurrence window: whole-session or `adjacent:<k>`.
    #[arg(long, default_value = "whole-session")]
    pub window: String,
    #[arg(long, default_value_t = 0.0)]
    pub min_confidence: f64,
    #[arg(long, default_value_t = 0.0)]
    pub min_lift: f64,
    /// Keep at most this many rules per antecedent (by confidence).
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Output rules file (JSON-lines).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> Result<serde_json::Value> {
    let window = super::parse_window(&args.window)?;
    let log = ingest::read_sessions(&args.sessions, ingest::DEFAULT_GAP_MS)?;
    let mined = rules::mine_pairwise_rules(&log, args.min_cooccur, window)?;
    let filtered =
        rules::filter_rules(&mined, args.min_confidence, args.min_lift, args.top_k)?;
    rules::write_rules(&args.out, &filtered)?;
    Ok(serde_json::json!({
        "cmd": "mine",
        "sessions": log.sessions.len(),
        "rules_mined": mined.rules.len(),
        "rules_kept": filtered.rules.len(),
        "out": args.out,
    }))
}
