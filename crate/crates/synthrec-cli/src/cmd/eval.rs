use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Parser;

use synthrec::eval;
use synthrec::ingest::{self, Session, SessionizedLog};

#[derive(Parser)]
pub struct Args {
    /// Synthetic training sequences: a sessions file or a walks file
    /// (detected by schema).
    #[arg(long)]
    pub synthetic: PathBuf,
    /// Real training sessions (JSON-lines).
    #[arg(long)]
    pub real_train: PathBuf,
    /// Real test sessions (JSON-lines).
    #[arg(long)]
    pub test: PathBuf,
    /// Baseline: markov-bigram, item-knn, or popularity.
    #[arg(long, default_value = "markov-bigram")]
    pub model: String,
    /// Recall cutoffs, ascending (e.g. 10,100,1000).
    #[arg(long, default_value = "10,100,1000")]
    pub ks: String,
    /// Output paired report (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Also print the paired comparison as a text table.
    #[arg(long, default_value_t = false)]
    pub table: bool,
}

/// Accepts either the sessions schema ({"user", "items"}) or the walks
/// schema ({"items", "path_conf"}); both carry ordered item sequences.
pub fn read_sequences(path: &Path) -> Result<Vec<Vec<String>>> {
    #[derive(serde::Deserialize)]
    struct AnyRecord {
        items: Vec<String>,
    }
    let records: Vec<AnyRecord> = {
        let content = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        content
            .lines()
            .enumerate()
            .map(|(i, line)| {
                serde_json::from_str(line)
                    .with_context(|| format!("{}:{}: bad record", path.display(), i + 1))
            })
            .collect::<Result<_>>()?
    };
    Ok(records.into_iter().map(|r| r.items).collect())
}

fn vocab_of(sequences: &[Vec<String>]) -> BTreeSet<String> {
    sequences.iter().flatten().cloned().collect()
}

/// Filter test sessions to the common vocabulary, dropping those that fall
/// under 2 items, mirroring the holdout filtering contract.
pub fn filter_test(log: &SessionizedLog, common: &BTreeSet<String>) -> SessionizedLog {
    let mut sessions = Vec::new();
    let mut vocab = BTreeSet::new();
    for s in &log.sessions {
        let items: Vec<String> =
            s.items.iter().filter(|i| common.contains(*i)).cloned().collect();
        if items.len() >= 2 {
            for i in &items {
                vocab.insert(i.clone());
            }
            sessions.push(Session { user: s.user.clone(), items });
        }
    }
    SessionizedLog { sessions, vocab, gap_threshold_ms: log.gap_threshold_ms }
}

pub fn run(args: Args) -> Result<serde_json::Value> {
    let kind = super::parse_baseline(&args.model)?;
    let ks = super::parse_ks(&args.ks)?;
    let synthetic = read_sequences(&args.synthetic)?;
    let real_train = read_sequences(&args.real_train)?;
    let test = ingest::read_sessions(&args.test, ingest::DEFAULT_GAP_MS)?;

    let common: BTreeSet<String> = vocab_of(&synthetic)
        .intersection(&vocab_of(&real_train))
        .cloned()
        .collect();
    let filtered = filter_test(&test, &common);
    if filtered.is_empty() {
        anyhow::bail!(synthrec::Error::EmptyTestSplit);
    }
    let report = eval::run_tstr_trtr(&synthetic, &real_train, &filtered, kind, &ks, &common)?;
    super::write_json(&args.out, &report)?;
    if args.table {
        let mut header = format!("{:<8}", "Setting");
        for k in &ks {
            header.push_str(&format!(" {:>10}", format!("Recall@{k}")));
        }
        eprintln!("{header}");
        for r in [&report.tstr, &report.trtr] {
            let mut line = format!("{:<8}", format!("{:?}", r.setting).to_uppercase());
            for k in &ks {
                line.push_str(&format!(" {:>10.4}", r.recall_at[k]));
            }
            eprintln!("{line}");
        }
    }
    Ok(serde_json::json!({
        "cmd": "eval",
        "model": args.model,
        "test_sessions": filtered.sessions.len(),
        "common_vocab": common.len(),
        "tstr": report.tstr.recall_at,
        "trtr": report.trtr.recall_at,
        "out": args.out,
    }))
}
