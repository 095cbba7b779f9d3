use std::path::PathBuf;

use anyhow::Result;
use clap::Parser;
use serde::{Deserialize, Serialize};

use synthrec::graph;
use synthrec::metrics;
use synthrec::rules;
use synthrec::seeds;
use synthrec::tokenizer;
use synthrec::walks::{self, StartPolicy, WalkConfig, WalkOrder};

/// (name, order, p, q, alpha_stop, path confidence threshold)
pub type SweepConfig = (String, WalkOrder, f64, f64, f64, Option<f64>);

/// The standard 14-configuration sweep: a first-order baseline pair plus
/// twelve BFS-leaning second-order variants (p=0.5, q=2.0) crossing the stop
/// probability with the path-confidence threshold.
pub fn standard_configs() -> Vec<SweepConfig> {
    let mut configs = Vec::new();
    for thresh in [None, Some(1e-9), Some(2e-9), Some(3e-9)] {
        for alpha in [0.10f64, 0.15, 0.20] {
            configs.push((
                format!("bfs_p05q2_a{:02}_{}", (alpha * 100.0).round() as u32, thresh_tag(thresh)),
                WalkOrder::Second,
                0.5,
                2.0,
                alpha,
                thresh,
            ));
        }
    }
    for thresh in [None, Some(1e-9)] {
        configs.push((
            format!("1st_order_a015_{}", thresh_tag(thresh)),
            WalkOrder::First,
            1.0,
            1.0,
            0.15,
            thresh,
        ));
    }
    configs
}

fn thresh_tag(t: Option<f64>) -> String {
    match t {
        None => "threshNone".to_string(),
        Some(v) => {
            // Two-digit exponent, matching names like "thresh1e-09".
            let formatted = format!("{v:e}");
            let (mantissa, exp) = formatted.split_once('e').unwrap();
            let exp: i32 = exp.parse().unwrap();
            format!("thresh{mantissa}e{}{:02}", if exp < 0 { "-" } else { "+" }, exp.abs())
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub config: String,
    pub alpha_stop: f64,
    pub thresh: Option<f64>,
    pub mean_len: f64,
    pub unique_items: u64,
    pub item_gini: f64,
    pub total_tokens: u64,
    pub token_gini: f64,
    pub geom_lift: f64,
    pub accept_rate: f64,
}

#[derive(Parser)]
pub struct Args {
    /// Binary graph file.
    #[arg(long)]
    pub graph: PathBuf,
    /// Rules file (for the lift column).
    #[arg(long)]
    pub rules: PathBuf,
    /// Semantic id map (for the token columns).
    #[arg(long)]
    pub id_map: PathBuf,
    /// Walks generated per configuration.
    #[arg(long, default_value_t = 2000)]
    pub n_walks: usize,
    #[arg(long)]
    pub seed: u64,
    /// Output report (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Also print an aligned text table.
    #[arg(long, default_value_t = false)]
    pub table: bool,
}

pub fn run(args: Args) -> Result<serde_json::Value> {
    let g = graph::read_graph(&args.graph)?;
    let rule_set = rules::read_rules(&args.rules)?;
    let id_map = tokenizer::read_id_map(&args.id_map)?;

    let mut rows = Vec::new();
    for (name, order, p, q, alpha_stop, thresh) in standard_configs() {
        let cfg = WalkConfig {
            order,
            p,
            q,
            alpha_stop,
            path_conf_threshold: thresh,
            min_len: 2,
            max_len: 50,
            n_walks: args.n_walks,
            seed: seeds::stage_seed(args.seed, &name),
            start_policy: StartPolicy::Uniform,
        };
        let (walks, report) = walks::generate_corpus_walks(&g, &cfg)?;
        let stats = metrics::corpus_stats(&walks, &g, &rule_set, &id_map)?;
        let total_tokens: u64 = walks
            .iter()
            .flat_map(|w| w.items.iter())
            .map(|&node| id_map.tokens_for(g.item(node)).map_or(0, |t| t.len()) as u64)
            .sum();
        rows.push(SweepRow {
            config: name,
            alpha_stop,
            thresh,
            mean_len: stats.mean_length,
            unique_items: stats.unique_items,
            item_gini: stats.item_gini,
            total_tokens,
            token_gini: stats.token_gini,
            geom_lift: stats.geom_lift,
            accept_rate: report.accept_rate,
        });
    }

    super::write_json(&args.out, &rows)?;
    if args.table {
        render_table(&rows);
    }
    Ok(serde_json::json!({
        "cmd": "sweep",
        "configs": rows.len(),
        "n_walks": args.n_walks,
        "out": args.out,
    }))
}

fn render_table(rows: &[SweepRow]) {
    eprintln!(
        "{:<28} {:>6} {:>9} {:>7} {:>7} {:>7} {:>9} {:>11} {:>10}",
        "Config", "Alpha", "Thresh", "Length", "Items", "Gini", "Tokens", "Token Gini", "Geom Lift"
    );
    for r in rows {
        eprintln!(
            "{:<28} {:>6.2} {:>9} {:>7.1} {:>7} {:>7.3} {:>9} {:>11.3} {:>10.2}",
            r.config,
            r.alpha_stop,
            r.thresh.map_or("None".to_string(), |t| format!("{t:.0e}")),
            r.mean_len,
            r.unique_items,
            r.item_gini,
            r.total_tokens,
            r.token_gini,
            r.geom_lift,
        );
    }
}
