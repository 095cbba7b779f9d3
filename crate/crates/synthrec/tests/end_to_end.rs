//! Library-level run through every stage: events to mixture, stats, fits,
//! and evaluation, without touching the CLI.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;

use synthrec::corpus::{self, DocKind, MixtureDomain, MixtureSpec};
use synthrec::eval::{run_tstr_trtr, BaselineKind};
use synthrec::graph::{build_graph, split_edges, SplitMode, WeightSource};
use synthrec::ingest::{self, EventFormat};
use synthrec::metrics;
use synthrec::rules::{filter_rules, mine_pairwise_rules, Window};
use synthrec::scaling;
use synthrec::seeds;
use synthrec::tokenizer::{encode_all, fit_rq_kmeans, EmbeddingMatrix, SemanticIdMap};
use synthrec::walks::{generate_corpus_walks, walks_to_sequences, WalkConfig, WalkOrder};

/// Synthesize a raw event log with per-user category habits.
fn synth_events_csv(n_users: usize, n_items: usize, seed: u64) -> String {
    let mut rng = seeds::rng_for(seed);
    let mut csv = String::from("user_id,item_id,timestamp,action\n");
    let per_cat = 6;
    let n_cats = n_items / per_cat;
    for u in 0..n_users {
        let mut ts: i64 = 1_600_000_000_000 + u as i64 * 3_600_000;
        for _session in 0..rng.random_range(1..=3usize) {
            let mut cat = u % n_cats;
            for _ in 0..rng.random_range(3..=7usize) {
                if rng.random::<f64>() < 0.2 {
                    cat = rng.random_range(0..n_cats);
                }
                let item = cat * per_cat + rng.random_range(0..per_cat);
                writeln!(csv, "u{u},item{item:03},{ts},view").unwrap();
                ts += 30_000;
            }
            ts += 86_400_000;
        }
    }
    csv
}

#[test]
fn events_to_reports() {
    let dir = tempfile::tempdir().unwrap();
    let events_path = dir.path().join("events.csv");
    std::fs::write(&events_path, synth_events_csv(80, 36, 0xE2E)).unwrap();

    // Ingest and split by user.
    let events = ingest::load_events(&events_path, EventFormat::Delimited).unwrap();
    let log = ingest::sessionize(&events, ingest::DEFAULT_GAP_MS).unwrap();
    assert!(log.sessions.len() > 80);
    let prelim = ingest::split_holdout(&log, 0.4, 11, &log.vocab).unwrap();

    // Rules, graph, and an edge holdout for good measure.
    let mined = mine_pairwise_rules(&prelim.train, 2, Window::WholeSession).unwrap();
    let rules = filter_rules(&mined, 0.0, 0.0, Some(12)).unwrap();
    let (graph, _) = build_graph(&rules, WeightSource::Confidence).unwrap();
    let edge_split = split_edges(&graph, 0.2, 5, SplitMode::EdgeHoldout).unwrap();
    assert_eq!(
        edge_split.train_graph.edge_count() + edge_split.test_edges.len(),
        graph.edge_count()
    );

    // Walks.
    let cfg = WalkConfig {
        order: WalkOrder::Second,
        p: 0.5,
        q: 2.0,
        n_walks: 500,
        seed: 21,
        max_len: 14,
        ..WalkConfig::default()
    };
    let (walks, report) = generate_corpus_walks(&graph, &cfg).unwrap();
    assert_eq!(report.n_walks, 500);

    // Semantic ids from synthetic clustered embeddings over the graph items.
    let dim = 6;
    let mut rng = seeds::rng_for(9);
    let items: Vec<String> = graph.items().to_vec();
    let data: Vec<f64> = (0..items.len())
        .flat_map(|i| {
            let base = (i / 6) as f64 * 25.0;
            (0..dim)
                .map(|_| base + rng.random::<f64>())
                .collect::<Vec<_>>()
        })
        .collect();
    let emb = EmbeddingMatrix::new(items.len(), dim, data).unwrap();
    let book = fit_rq_kmeans(&emb, &[6, 6], 12, 3).unwrap();
    let ids = encode_all(&emb, &book, 5).unwrap();
    let id_map = SemanticIdMap::build(&items, &ids, &book).unwrap();

    // Render all three layers.
    let uih_docs: Vec<_> = walks
        .iter()
        .map(|w| corpus::render_uih(w, &graph, &id_map).unwrap())
        .collect();
    let cf_docs: Vec<_> = rules
        .rules
        .iter()
        .map(|r| {
            corpus::render_cf_statement(
                r,
                id_map.tokens_for(&r.antecedent).unwrap(),
                id_map.tokens_for(&r.consequent).unwrap(),
            )
            .unwrap()
        })
        .collect();
    let item_docs: Vec<_> = items
        .iter()
        .map(|item| {
            corpus::render_item_text(
                id_map.tokens_for(item).unwrap(),
                &format!("{item} listing"),
            )
            .unwrap()
        })
        .collect();

    // Every rendered document re-parses under its grammar.
    for d in &uih_docs {
        corpus::parse_uih(&d.text).unwrap();
    }
    for d in &cf_docs {
        corpus::parse_cf_statement(&d.text).unwrap();
    }
    for d in &item_docs {
        corpus::parse_item_text(&d.text).unwrap();
    }

    // Mixture.
    let spec = MixtureSpec {
        domains: vec![
            MixtureDomain::new("item_text", 0.2, item_docs),
            MixtureDomain::new("cf", 0.4, cf_docs),
            MixtureDomain::new("uih", 0.4, uih_docs),
        ],
        total_token_budget: 40_000,
    };
    let (mixed, mix_report) = corpus::compose_mixture(&spec, 7).unwrap();
    assert!(mix_report.total_tokens >= 40_000);
    assert_eq!(
        mixed.iter().filter(|d| d.kind == DocKind::Uih).count() as u64,
        mix_report.domains.iter().find(|d| d.name == "uih").unwrap().docs_emitted
    );

    // Stats.
    let stats = metrics::corpus_stats(&walks, &graph, &rules, &id_map).unwrap();
    assert!(stats.item_gini >= 0.0 && stats.item_gini < 1.0);
    assert!(stats.geom_lift > 0.0);

    // Scaling fit on a synthetic surface written through the curve reader.
    let curves_path = dir.path().join("curves.csv");
    let mut csv = String::from("model_params,tokens,loss\n");
    for n in [6e8f64, 1.7e9, 4e9] {
        for i in 0..6 {
            let d = 1e9 * 10f64.powf(i as f64 / 2.0);
            let loss = 0.5 + 40.0 * n.powf(-0.35) + 8.0 * d.powf(-0.2);
            writeln!(csv, "{n:e},{d:e},{loss:.12}").unwrap();
        }
    }
    std::fs::write(&curves_path, csv).unwrap();
    let curves = scaling::read_curves_delimited(&curves_path).unwrap();
    let joint = scaling::fit_joint(&curves).unwrap();
    assert!((joint.beta - 0.2).abs() / 0.2 < 0.01);
    let (n_opt, d_opt, _) = scaling::compute_optimal_allocation(&joint, 1e20).unwrap();
    assert!(((6.0 * n_opt * d_opt - 1e20) / 1e20).abs() < 1e-9);

    // Final holdout against the synthetic vocabulary, then TSTR/TRTR.
    let synthetic = walks_to_sequences(&walks, &graph);
    let syn_vocab: BTreeSet<String> = synthetic.iter().flatten().cloned().collect();
    let split = ingest::split_holdout(&log, 0.4, 11, &syn_vocab).unwrap();
    let paired = run_tstr_trtr(
        &synthetic,
        &split.train.sequences(),
        &split.test,
        BaselineKind::MarkovBigram,
        &[1, 5, 10],
        &split.common_vocab,
    )
    .unwrap();
    for r in [&paired.tstr, &paired.trtr] {
        let values: Vec<f64> = r.recall_at.values().copied().collect();
        assert!(values.windows(2).all(|w| w[0] <= w[1]));
        assert!(r.n_predictions > 0);
    }
}
