use std::path::PathBuf;

use anyhow::Result;
use clap::Parser;

use synthrec::ingest::{self, EventFormat};

#[derive(Parser)]
pub struct Args {
    /// Raw interaction log.
    #[arg(long)]
    pub events: PathBuf,
    /// Input format: delimited (header row) or jsonl.
    #[arg(long, default_value = "delimited")]
    pub format: String,
    /// Inter-event gap that opens a new session, in milliseconds.
    #[arg(long, default_value_t = ingest::DEFAULT_GAP_MS)]
    pub gap_ms: i64,
    /// Output sessions file (JSON-lines).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> Result<serde_json::Value> {
    let format = match args.format.as_str() {
        "delimited" => EventFormat::Delimited,
        "jsonl" => EventFormat::JsonLines,
        other => anyhow::bail!("format must be 'delimited' or 'jsonl', got '{other}'"),
    };
    let events = ingest::load_events(&args.events, format)?;
    let log = ingest::sessionize(&events, args.gap_ms)?;
    ingest::write_sessions(&args.out, &log)?;
    Ok(serde_json::json!({
        "cmd": "ingest",
        "events": events.len(),
        "sessions": log.sessions.len(),
        "vocab": log.vocab.len(),
        "out": args.out,
    }))
}
