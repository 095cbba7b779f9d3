use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;

use synthrec::corpus::{self, DocKind, MixtureDomain, MixtureSpec};
use synthrec::graph;
use synthrec::ingest::{self, EventFormat};
use synthrec::metrics;
use synthrec::rules;
use synthrec::scaling;
use synthrec::seeds;
use synthrec::tokenizer;
use synthrec::walks::{self, WalkConfig};

use crate::config::PipelineConfig;

#[derive(Parser)]
pub struct Args {
    /// Pipeline config (JSON). Relative paths resolve against the file.
    #[arg(long)]
    pub config: PathBuf,
    /// Override the config's global seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<serde_json::Value> {
    let cfg = PipelineConfig::load(&args.config, args.seed, args.out_dir)?;
    let problems = cfg.validate();
    if !problems.is_empty() {
        anyhow::bail!(synthrec::Error::InvalidConfig(problems.join("; ")));
    }
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out.join("corpus"))
        .with_context(|| format!("creating {}", out.display()))?;

    // Stage seeds fan out from the global seed by stage name.
    let holdout_seed = seeds::stage_seed(cfg.seed, "holdout");
    let walk_seed = seeds::stage_seed(cfg.seed, "walks");
    let tokenize_seed = seeds::stage_seed(cfg.seed, "tokenize");
    let compose_seed = seeds::stage_seed(cfg.seed, "compose");

    // Ingest.
    let format = match cfg.events_format.as_str() {
        "delimited" => EventFormat::Delimited,
        _ => EventFormat::JsonLines,
    };
    let events = ingest::load_events(&cfg.events, format)?;
    let log = ingest::sessionize(&events, cfg.gap_ms)?;
    ingest::write_sessions(&out.join("sessions.jsonl"), &log)?;

    // Train/test user partition. The first pass uses the full vocabulary;
    // once walks exist, the same seed re-derives the identical partition
    // with test sessions filtered to the synthetic vocabulary.
    let prelim = ingest::split_holdout(&log, cfg.test_fraction, holdout_seed, &log.vocab)?;
    ingest::write_sessions(&out.join("train_sessions.jsonl"), &prelim.train)?;

    // Rules on training sessions only.
    let mined = rules::mine_pairwise_rules(
        &prelim.train,
        cfg.min_cooccur,
        rules::Window::WholeSession,
    )?;
    let rule_set = rules::filter_rules(
        &mined,
        cfg.min_confidence,
        cfg.min_lift,
        cfg.top_k_per_antecedent,
    )?;
    rules::write_rules(&out.join("rules.jsonl"), &rule_set)?;

    // Graph.
    let weight = super::parse_weight_source(&cfg.weight_source)?;
    let (item_graph, _) = graph::build_graph(&rule_set, weight)?;
    graph::write_graph(&out.join("graph.bin"), &item_graph)?;
    graph::write_graph_dump(&out.join("graph_dump.jsonl"), &item_graph)?;

    // Walks.
    let walk_cfg = WalkConfig {
        order: cfg.walks.order,
        p: cfg.walks.p,
        q: cfg.walks.q,
        alpha_stop: cfg.walks.alpha_stop,
        path_conf_threshold: cfg.walks.path_conf_threshold,
        min_len: cfg.walks.min_len,
        max_len: cfg.walks.max_len,
        n_walks: cfg.walks.n_walks,
        seed: walk_seed,
        start_policy: cfg.walks.start_policy,
    };
    let (walk_list, walk_report) = walks::generate_corpus_walks(&item_graph, &walk_cfg)?;
    walks::write_walks(&out.join("walks.jsonl"), &walk_list, &item_graph)?;
    super::write_json(&out.join("walk_report.json"), &walk_report)?;

    // Semantic ids.
    let emb = tokenizer::read_embeddings(&cfg.embeddings)?;
    let items = tokenizer::read_item_ids(&cfg.items)?;
    if items.len() != emb.n_items() {
        anyhow::bail!(
            "item sidecar has {} ids but embedding matrix has {} rows",
            items.len(),
            emb.n_items()
        );
    }
    let book = tokenizer::fit_rq_kmeans(&emb, &cfg.layers, cfg.kmeans_iters, tokenize_seed)?;
    let ids = tokenizer::encode_all(&emb, &book, cfg.beam)?;
    let collision = tokenizer::collision_rate(&ids)?;
    let id_map = tokenizer::SemanticIdMap::build(&items, &ids, &book)?;
    tokenizer::write_codebook(&out.join("codebook.bin"), &book)?;
    tokenizer::write_id_map(&out.join("id_map.jsonl"), &id_map)?;

    // Final holdout against the synthetic vocabulary.
    let synthetic_vocab: std::collections::BTreeSet<String> = walk_list
        .iter()
        .flat_map(|w| w.items.iter().map(|&n| item_graph.item(n).to_string()))
        .collect();
    let split = ingest::split_holdout(&log, cfg.test_fraction, holdout_seed, &synthetic_vocab)?;
    ingest::write_sessions(&out.join("test_sessions.jsonl"), &split.test)?;

    // Three corpus layers.
    let descriptions = corpus::read_descriptions(&cfg.descriptions)?;
    let item_text_docs = super::render::render_item_text(&id_map, &descriptions)?;
    corpus::write_corpus(&out.join("corpus/item_text.txt"), &item_text_docs)?;
    let cf_docs = super::render::render_cf(&rule_set, &id_map)?;
    corpus::write_corpus(&out.join("corpus/cf.txt"), &cf_docs)?;
    let uih_docs = super::render::render_uih(&walk_list, &item_graph, &id_map)?;
    corpus::write_corpus(&out.join("corpus/uih.txt"), &uih_docs)?;

    // Mixture.
    let mut domains = Vec::new();
    for (name, &ratio) in &cfg.mixture {
        if ratio <= 0.0 {
            continue;
        }
        let docs = match name.as_str() {
            "item_text" => item_text_docs.clone(),
            "cf" => cf_docs.clone(),
            "uih" => uih_docs.clone(),
            "general" => {
                let path = cfg.general_corpus.as_ref().expect("validated");
                corpus::read_corpus(path, DocKind::General)?
            }
            other => anyhow::bail!("unknown mixture domain '{other}'"),
        };
        domains.push(MixtureDomain::new(name.clone(), ratio, docs));
    }
    let spec = MixtureSpec { domains, total_token_budget: cfg.token_budget };
    let (mixed, mixture_report) = corpus::compose_mixture(&spec, compose_seed)?;
    corpus::write_corpus(&out.join("mixture.txt"), &mixed)?;
    super::write_json(&out.join("mixture_report.json"), &mixture_report)?;

    // Fidelity stats for the walk corpus.
    let stats = metrics::corpus_stats(&walk_list, &item_graph, &rule_set, &id_map)?;
    super::write_json(&out.join("stats.json"), &stats)?;

    // Scaling-law fits, when curves are supplied.
    let mut fitted = false;
    if let Some(curves_path) = &cfg.curves {
        let curves = scaling::read_curves_delimited(curves_path)?;
        let per_model: Vec<serde_json::Value> = curves
            .iter()
            .map(|c| -> Result<serde_json::Value> {
                let fit = scaling::fit_per_model(c)?;
                Ok(serde_json::json!({
                    "label": c.label,
                    "model_params": c.model_params,
                    "l_inf": fit.l_inf,
                    "a": fit.a,
                    "alpha": fit.alpha,
                    "rmse": fit.rmse,
                    "alpha_identifiable": fit.alpha_identifiable,
                }))
            })
            .collect::<Result<_>>()?;
        let mut distinct: Vec<f64> = curves.iter().map(|c| c.model_params).collect();
        distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
        distinct.dedup();
        let joint = if distinct.len() >= 3 {
            let fit = scaling::fit_joint(&curves)?;
            let (alpha_a, beta_b) = scaling::tradeoff_coefficients(&fit);
            let allocations: Vec<serde_json::Value> = [1e18, 1e20, 1e22]
                .iter()
                .map(|&c| -> Result<serde_json::Value> {
                    let (n, d, loss) = scaling::compute_optimal_allocation(&fit, c)?;
                    Ok(serde_json::json!({"budget": c, "n_opt": n, "d_opt": d, "loss": loss}))
                })
                .collect::<Result<_>>()?;
            Some(serde_json::json!({
                "fit": fit,
                "tradeoff": {"alpha_a": alpha_a, "beta_b": beta_b},
                "allocations": allocations,
            }))
        } else {
            None
        };
        super::write_json(
            &out.join("fits.json"),
            &serde_json::json!({"per_model": per_model, "joint": joint}),
        )?;
        fitted = true;
    }

    // Paired TSTR/TRTR evaluation.
    let kind = super::parse_baseline(&cfg.eval_model)?;
    let synthetic_sequences = walks::walks_to_sequences(&walk_list, &item_graph);
    let eval_report = synthrec::eval::run_tstr_trtr(
        &synthetic_sequences,
        &split.train.sequences(),
        &split.test,
        kind,
        &cfg.eval_ks,
        &split.common_vocab,
    )?;
    super::write_json(&out.join("eval.json"), &eval_report)?;

    Ok(serde_json::json!({
        "cmd": "pipeline",
        "out_dir": out,
        "seed": cfg.seed,
        "sessions": log.sessions.len(),
        "rules": rule_set.rules.len(),
        "graph_nodes": item_graph.node_count(),
        "graph_edges": item_graph.edge_count(),
        "walks": walk_report.n_walks,
        "collision_rate": collision,
        "mixture_tokens": mixture_report.total_tokens,
        "fits": fitted,
        "tstr_recall": eval_report.tstr.recall_at,
        "trtr_recall": eval_report.trtr.recall_at,
    }))
}
