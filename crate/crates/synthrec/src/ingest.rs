//! Interaction-log loading, sessionization, and train/holdout splitting.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::seeds;

/// Default inter-event gap that opens a new session: 30 minutes.
pub const DEFAULT_GAP_MS: i64 = 30 * 60 * 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    View,
    Like,
    Purchase,
    Other,
}

impl Action {
    /// Unknown action strings map to `Other`; this never fails.
    pub fn from_str_lossy(s: &str) -> Action {
        match s {
            "view" => Action::View,
            "like" => Action::Like,
            "purchase" => Action::Purchase,
            _ => Action::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionEvent {
    pub user_id: String,
    pub item_id: String,
    /// Epoch milliseconds; never negative.
    pub timestamp: i64,
    pub action: Action,
}

/// One user session: an ordered item sequence of length >= 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub user: String,
    pub items: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionizedLog {
    pub sessions: Vec<Session>,
    pub vocab: BTreeSet<String>,
    pub gap_threshold_ms: i64,
}

impl SessionizedLog {
    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    /// Users in first-appearance order, deduplicated.
    pub fn users(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for s in &self.sessions {
            if seen.insert(s.user.as_str()) {
                out.push(s.user.as_str());
            }
        }
        out
    }

    /// Item sequences without user attribution, as consumed by baselines.
    pub fn sequences(&self) -> Vec<Vec<String>> {
        self.sessions.iter().map(|s| s.items.clone()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct HoldoutSplit {
    pub train: SessionizedLog,
    pub test: SessionizedLog,
    pub common_vocab: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    Delimited,
    JsonLines,
}

#[derive(Deserialize)]
struct JsonEvent {
    user_id: String,
    item_id: String,
    timestamp: i64,
    action: String,
}

/// Load raw interaction events from a delimited or JSON-lines file.
///
/// Rows come back in file order. A malformed row is a hard error naming the
/// offending line; it is never skipped. Unknown action strings fold to
/// `Action::Other`.
pub fn load_events(path: &Path, format: EventFormat) -> Result<Vec<InteractionEvent>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut events = Vec::new();
    match format {
        EventFormat::Delimited => {
            let mut lines = reader.lines().enumerate();
            let (_, header) = lines
                .next()
                .ok_or_else(|| Error::parse(path, 1, "empty file, expected header row"))?;
            let header = header.map_err(|e| Error::io(path, e))?;
            if header.trim_end_matches('\r') != "user_id,item_id,timestamp,action" {
                return Err(Error::parse(
                    path,
                    1,
                    format!("expected header 'user_id,item_id,timestamp,action', got '{header}'"),
                ));
            }
            for (idx, line) in lines {
                let line = line.map_err(|e| Error::io(path, e))?;
                let line = line.trim_end_matches('\r');
                let event = parse_delimited_row(line)
                    .map_err(|msg| Error::parse(path, idx + 1, msg))?;
                events.push(event);
            }
        }
        EventFormat::JsonLines => {
            for (idx, line) in reader.lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                let row: JsonEvent = serde_json::from_str(&line)
                    .map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
                let event = validate_event(
                    row.user_id,
                    row.item_id,
                    row.timestamp,
                    Action::from_str_lossy(&row.action),
                )
                .map_err(|msg| Error::parse(path, idx + 1, msg))?;
                events.push(event);
            }
        }
    }
    Ok(events)
}

fn parse_delimited_row(line: &str) -> std::result::Result<InteractionEvent, String> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 4 {
        return Err(format!("expected 4 fields, got {}", fields.len()));
    }
    let timestamp: i64 = fields[2]
        .parse()
        .map_err(|_| format!("timestamp '{}' is not an integer", fields[2]))?;
    validate_event(
        fields[0].to_string(),
        fields[1].to_string(),
        timestamp,
        Action::from_str_lossy(fields[3]),
    )
}

fn validate_event(
    user_id: String,
    item_id: String,
    timestamp: i64,
    action: Action,
) -> std::result::Result<InteractionEvent, String> {
    if user_id.is_empty() {
        return Err("missing user_id".into());
    }
    if item_id.is_empty() {
        return Err("missing item_id".into());
    }
    if timestamp < 0 {
        return Err(format!("negative timestamp {timestamp}"));
    }
    Ok(InteractionEvent { user_id, item_id, timestamp, action })
}

/// Group events into per-user sessions.
///
/// Events are grouped by user and stably sorted by timestamp; a new session
/// starts whenever the inter-event gap exceeds `gap_threshold_ms`. Sessions
/// of length 1 are dropped: they carry no pairwise or next-item signal.
pub fn sessionize(events: &[InteractionEvent], gap_threshold_ms: i64) -> Result<SessionizedLog> {
    if gap_threshold_ms <= 0 {
        return Err(Error::InvalidConfig(format!(
            "gap_threshold_ms must be positive, got {gap_threshold_ms}"
        )));
    }
    // Users keyed in first-appearance order so output ordering is a pure
    // function of the input.
    let mut order: Vec<&str> = Vec::new();
    let mut by_user: BTreeMap<&str, Vec<&InteractionEvent>> = BTreeMap::new();
    for ev in events {
        let entry = by_user.entry(ev.user_id.as_str()).or_default();
        if entry.is_empty() {
            order.push(ev.user_id.as_str());
        }
        entry.push(ev);
    }

    let mut sessions = Vec::new();
    let mut vocab = BTreeSet::new();
    for user in order {
        let mut evs = by_user.remove(user).unwrap_or_default();
        evs.sort_by_key(|e| e.timestamp); // stable: ties keep file order
        let mut current: Vec<String> = Vec::new();
        let mut last_ts: Option<i64> = None;
        for ev in evs {
            if let Some(prev) = last_ts {
                if ev.timestamp - prev > gap_threshold_ms {
                    flush_session(&mut sessions, &mut vocab, user, &mut current);
                }
            }
            current.push(ev.item_id.clone());
            last_ts = Some(ev.timestamp);
        }
        flush_session(&mut sessions, &mut vocab, user, &mut current);
    }

    Ok(SessionizedLog { sessions, vocab, gap_threshold_ms })
}

fn flush_session(
    sessions: &mut Vec<Session>,
    vocab: &mut BTreeSet<String>,
    user: &str,
    current: &mut Vec<String>,
) {
    if current.len() >= 2 {
        for item in current.iter() {
            vocab.insert(item.clone());
        }
        sessions.push(Session { user: user.to_string(), items: std::mem::take(current) });
    } else {
        current.clear();
    }
}

/// Partition users into train/test and filter test sessions to the common
/// vocabulary (train vocab intersect `synthetic_vocab`).
///
/// The split is by user, never by event, so no test user's history leaks into
/// training. Test items outside the common vocabulary are removed; sessions
/// that fall under 2 items afterwards are dropped. Deterministic in `seed`.
pub fn split_holdout(
    log: &SessionizedLog,
    test_fraction: f64,
    seed: u64,
    synthetic_vocab: &BTreeSet<String>,
) -> Result<HoldoutSplit> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "test_fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let mut users: Vec<String> = log.vocab_users_sorted();
    if users.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 users to split, got {}",
            users.len()
        )));
    }
    let mut rng = seeds::rng_for(seeds::substream(seed, 0));
    users.shuffle(&mut rng);
    let n = users.len();
    let k = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let test_users: BTreeSet<&str> = users[..k].iter().map(String::as_str).collect();

    let mut train_sessions = Vec::new();
    let mut train_vocab = BTreeSet::new();
    for s in &log.sessions {
        if !test_users.contains(s.user.as_str()) {
            for item in &s.items {
                train_vocab.insert(item.clone());
            }
            train_sessions.push(s.clone());
        }
    }
    let common_vocab: BTreeSet<String> =
        train_vocab.intersection(synthetic_vocab).cloned().collect();

    let mut test_sessions = Vec::new();
    let mut test_vocab = BTreeSet::new();
    for s in &log.sessions {
        if test_users.contains(s.user.as_str()) {
            let filtered: Vec<String> = s
                .items
                .iter()
                .filter(|item| common_vocab.contains(*item))
                .cloned()
                .collect();
            if filtered.len() >= 2 {
                for item in &filtered {
                    test_vocab.insert(item.clone());
                }
                test_sessions.push(Session { user: s.user.clone(), items: filtered });
            }
        }
    }
    if test_sessions.is_empty() {
        return Err(Error::EmptyTestSplit);
    }

    Ok(HoldoutSplit {
        train: SessionizedLog {
            sessions: train_sessions,
            vocab: train_vocab,
            gap_threshold_ms: log.gap_threshold_ms,
        },
        test: SessionizedLog {
            sessions: test_sessions,
            vocab: test_vocab,
            gap_threshold_ms: log.gap_threshold_ms,
        },
        common_vocab,
    })
}

impl SessionizedLog {
    fn vocab_users_sorted(&self) -> Vec<String> {
        let mut users: Vec<String> =
            self.sessions.iter().map(|s| s.user.clone()).collect();
        users.sort();
        users.dedup();
        users
    }
}

#[derive(Serialize, Deserialize)]
struct SessionRecord {
    user: String,
    items: Vec<String>,
}

/// Persist sessions as JSON-lines, one `{"user": ..., "items": [...]}` per line.
pub fn write_sessions(path: &Path, log: &SessionizedLog) -> Result<()> {
    jsonl::write_jsonl(
        path,
        log.sessions.iter().map(|s| SessionRecord { user: s.user.clone(), items: s.items.clone() }),
    )
}

/// Load sessions persisted by [`write_sessions`]. The gap threshold is not
/// stored in the file; callers supply the one used at sessionization time.
pub fn read_sessions(path: &Path, gap_threshold_ms: i64) -> Result<SessionizedLog> {
    let records: Vec<SessionRecord> = jsonl::read_jsonl(path)?;
    let mut vocab = BTreeSet::new();
    let mut sessions = Vec::with_capacity(records.len());
    for (idx, r) in records.into_iter().enumerate() {
        if r.items.len() < 2 {
            return Err(Error::parse(path, idx + 1, "session shorter than 2 items"));
        }
        for item in &r.items {
            vocab.insert(item.clone());
        }
        sessions.push(Session { user: r.user, items: r.items });
    }
    Ok(SessionizedLog { sessions, vocab, gap_threshold_ms })
}
