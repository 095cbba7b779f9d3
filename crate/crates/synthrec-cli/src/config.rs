//! Layered pipeline configuration: JSON file, `SYNTHREC_*` environment
//! overrides, then command-line flags, with flags winning.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use synthrec::walks::{StartPolicy, WalkOrder};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkSection {
    #[serde(default = "default_order")]
    pub order: WalkOrder,
    #[serde(default = "one")]
    pub p: f64,
    #[serde(default = "one")]
    pub q: f64,
    #[serde(default = "default_alpha_stop")]
    pub alpha_stop: f64,
    #[serde(default)]
    pub path_conf_threshold: Option<f64>,
    #[serde(default = "default_min_len")]
    pub min_len: usize,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    pub n_walks: usize,
    #[serde(default = "default_start_policy")]
    pub start_policy: StartPolicy,
}

fn default_order() -> WalkOrder {
    WalkOrder::Second
}
fn one() -> f64 {
    1.0
}
fn default_alpha_stop() -> f64 {
    0.15
}
fn default_min_len() -> usize {
    2
}
fn default_max_len() -> usize {
    50
}
fn default_start_policy() -> StartPolicy {
    StartPolicy::Uniform
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub events: PathBuf,
    #[serde(default = "default_events_format")]
    pub events_format: String,
    #[serde(default = "default_gap_ms")]
    pub gap_ms: i64,
    pub descriptions: PathBuf,
    pub embeddings: PathBuf,
    pub items: PathBuf,
    #[serde(default)]
    pub general_corpus: Option<PathBuf>,
    #[serde(default)]
    pub curves: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_min_cooccur")]
    pub min_cooccur: u64,
    #[serde(default)]
    pub min_confidence: f64,
    #[serde(default)]
    pub min_lift: f64,
    #[serde(default)]
    pub top_k_per_antecedent: Option<usize>,
    #[serde(default = "default_weight_source")]
    pub weight_source: String,
    pub walks: WalkSection,
    pub layers: Vec<usize>,
    #[serde(default = "default_kmeans_iters")]
    pub kmeans_iters: usize,
    #[serde(default = "default_beam")]
    pub beam: usize,
    /// Domain name -> mixture ratio; recognized names are
    /// item_text, cf, uih, general.
    pub mixture: BTreeMap<String, f64>,
    pub token_budget: u64,
    pub eval_ks: Vec<usize>,
    #[serde(default = "default_eval_model")]
    pub eval_model: String,
}

fn default_events_format() -> String {
    "delimited".into()
}
fn default_gap_ms() -> i64 {
    synthrec::ingest::DEFAULT_GAP_MS
}
fn default_test_fraction() -> f64 {
    0.5
}
fn default_min_cooccur() -> u64 {
    2
}
fn default_weight_source() -> String {
    "confidence".into()
}
fn default_kmeans_iters() -> usize {
    10
}
fn default_beam() -> usize {
    5
}
fn default_eval_model() -> String {
    "markov-bigram".into()
}

const KNOWN_DOMAINS: [&str; 4] = ["item_text", "cf", "uih", "general"];

impl PipelineConfig {
    /// Load the file, then apply environment and flag overrides.
    pub fn load(
        path: &Path,
        seed_override: Option<u64>,
        out_dir_override: Option<PathBuf>,
    ) -> Result<PipelineConfig> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&raw)
            .with_context(|| format!("parsing config {}", path.display()))?;

        // Environment layer.
        if let Ok(v) = std::env::var("SYNTHREC_SEED") {
            cfg.seed = v.parse().context("SYNTHREC_SEED must be an integer")?;
        }
        if let Ok(v) = std::env::var("SYNTHREC_OUT_DIR") {
            cfg.out_dir = PathBuf::from(v);
        }
        // Flag layer wins.
        if let Some(seed) = seed_override {
            cfg.seed = seed;
        }
        if let Some(dir) = out_dir_override {
            cfg.out_dir = dir;
        }

        // Paths in the config resolve relative to the config file.
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let anchor = |p: &PathBuf| -> PathBuf {
            if p.is_absolute() {
                p.clone()
            } else {
                base.join(p)
            }
        };
        cfg.events = anchor(&cfg.events);
        cfg.descriptions = anchor(&cfg.descriptions);
        cfg.embeddings = anchor(&cfg.embeddings);
        cfg.items = anchor(&cfg.items);
        cfg.general_corpus = cfg.general_corpus.as_ref().map(&anchor);
        cfg.curves = cfg.curves.as_ref().map(anchor);

        Ok(cfg)
    }

    /// Every violation, not just the first.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        for (name, p) in [
            ("events", Some(&self.events)),
            ("descriptions", Some(&self.descriptions)),
            ("embeddings", Some(&self.embeddings)),
            ("items", Some(&self.items)),
            ("general_corpus", self.general_corpus.as_ref()),
            ("curves", self.curves.as_ref()),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    problems.push(format!("{name} path does not exist: {}", p.display()));
                }
            }
        }
        if !matches!(self.events_format.as_str(), "delimited" | "jsonl") {
            problems.push(format!(
                "events_format must be 'delimited' or 'jsonl', got '{}'",
                self.events_format
            ));
        }
        if self.gap_ms <= 0 {
            problems.push(format!("gap_ms must be positive, got {}", self.gap_ms));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            problems.push(format!(
                "test_fraction must be in (0, 1), got {}",
                self.test_fraction
            ));
        }
        if self.min_cooccur < 1 {
            problems.push("min_cooccur must be >= 1".into());
        }
        if !matches!(self.weight_source.as_str(), "confidence" | "lift" | "support") {
            problems.push(format!(
                "weight_source must be confidence|lift|support, got '{}'",
                self.weight_source
            ));
        }
        if self.walks.n_walks == 0 {
            problems.push("walks.n_walks must be positive".into());
        }
        if self.walks.min_len < 2 || self.walks.min_len > self.walks.max_len {
            problems.push(format!(
                "walks.min_len must be in [2, max_len], got {} (max_len {})",
                self.walks.min_len, self.walks.max_len
            ));
        }
        if !(self.walks.alpha_stop > 0.0 && self.walks.alpha_stop < 1.0) {
            problems.push(format!(
                "walks.alpha_stop must be in (0, 1), got {}",
                self.walks.alpha_stop
            ));
        }
        if self.layers.is_empty() || self.layers.contains(&0) {
            problems.push("layers must be a non-empty list of positive sizes".into());
        }
        if self.kmeans_iters < 1 {
            problems.push("kmeans_iters must be >= 1".into());
        }
        if self.beam < 1 {
            problems.push("beam must be >= 1".into());
        }
        for name in self.mixture.keys() {
            if !KNOWN_DOMAINS.contains(&name.as_str()) {
                problems.push(format!(
                    "unknown mixture domain '{name}' (expected one of {KNOWN_DOMAINS:?})"
                ));
            }
        }
        let ratio_sum: f64 = self.mixture.values().sum();
        if (ratio_sum - 1.0).abs() > 1e-9 {
            problems.push(format!("mixture ratios sum to {ratio_sum}, expected 1"));
        }
        if self.mixture.get("general").copied().unwrap_or(0.0) > 0.0
            && self.general_corpus.is_none()
        {
            problems.push("mixture includes 'general' but general_corpus is not set".into());
        }
        if self.token_budget == 0 {
            problems.push("token_budget must be positive".into());
        }
        if self.eval_ks.is_empty()
            || self.eval_ks.contains(&0)
            || self.eval_ks.windows(2).any(|w| w[0] >= w[1])
        {
            problems.push("eval_ks must be a non-empty ascending list of positive K".into());
        }
        if !matches!(
            self.eval_model.as_str(),
            "markov-bigram" | "item-knn" | "popularity"
        ) {
            problems.push(format!(
                "eval_model must be markov-bigram|item-knn|popularity, got '{}'",
                self.eval_model
            ));
        }
        problems
    }
}
