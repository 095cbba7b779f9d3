//! Acceptance suite.
//!
//! One test per acceptance criterion, each printing a `[PASS]` line with the
//! measured figures. Criteria pin exact reference arithmetic (trade-off
//! pairs, repeats accounting, template bytes) and property-level guarantees
//! (oracle equivalence, recovery tolerances, determinism).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use synthrec::corpus;
use synthrec::eval::{run_tstr_trtr, BaselineKind};
use synthrec::graph::{build_graph, ItemGraph, WeightSource};
use synthrec::ingest::{Session, SessionizedLog};
use synthrec::metrics;
use synthrec::rules::{mine_pairwise_rules, AssociationRule, RuleSet, Window};
use synthrec::scaling::{
    compute_optimal_allocation, data_multiplier_for_half_loss, fit_joint, fit_per_model,
    tradeoff_coefficients, JointScalingFit, LossCurve,
};
use synthrec::tokenizer::{collision_rate, encode_all, fit_rq_kmeans, EmbeddingMatrix};
use synthrec::walks::{
    generate_corpus_walks, sample_transition, transition_distribution, walks_to_sequences,
    StartPolicy, WalkConfig, WalkOrder,
};

/// Joint-law coefficient sets (E, A, alpha, B, beta) for the four domains,
/// paired with their published trade-off rows (alpha*A, beta*B).
type DomainRow = (&'static str, f64, f64, f64, f64, f64, f64, f64);
const DOMAIN_FITS: [DomainRow; 4] = [
    ("general", 0.79, 16_500.0, 0.511, 3.85, 0.048, 8_432.0, 0.185),
    ("item-text", 0.473, 5_720.0, 0.511, 4.04, 0.070, 2_923.0, 0.283),
    ("cf", 0.193, 21.0, 0.277, 6.79, 0.148, 5.82, 1.005),
    ("uih", 0.514, 1.89, 0.138, 63.9, 0.272, 0.261, 17.38),
];

fn joint_fit(e: f64, a: f64, alpha: f64, b: f64, beta: f64) -> JointScalingFit {
    JointScalingFit {
        e,
        a,
        alpha,
        b,
        beta,
        rmse: 0.0,
        alpha_identifiable: true,
        beta_identifiable: true,
    }
}

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-300)
}

#[test]
fn criterion_01_tradeoff_arithmetic() {
    for (name, e, a, alpha, b, beta, want_aa, want_bb) in DOMAIN_FITS {
        let fit = joint_fit(e, a, alpha, b, beta);
        let (aa, bb) = tradeoff_coefficients(&fit);
        assert!(
            rel_err(aa, want_aa) < 0.005,
            "{name}: alpha*A = {aa}, expected ~{want_aa}"
        );
        assert!(
            rel_err(bb, want_bb) < 0.005,
            "{name}: beta*B = {bb}, expected ~{want_bb}"
        );
    }
    println!("[PASS] criterion 01: trade-off pairs match all four reference rows within 0.5%");
}

#[test]
fn criterion_02_data_multiplier_arithmetic() {
    let general = data_multiplier_for_half_loss(0.048).unwrap();
    assert!(
        (1.7e6..=1.9e6).contains(&general),
        "2^(1/0.048) = {general}, expected within [1.7e6, 1.9e6]"
    );
    let uih = data_multiplier_for_half_loss(0.272).unwrap();
    assert!(
        (12.5..=13.5).contains(&uih),
        "2^(1/0.272) = {uih}, expected within [12.5, 13.5]"
    );
    println!(
        "[PASS] criterion 02: data multipliers 2^(1/0.048)={general:.3e}, 2^(1/0.272)={uih:.2}"
    );
}

fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[test]
fn criterion_03_fitter_recovery() {
    // Noiseless recovery across 100 random parameter sets: every parameter
    // within 0.1% relative. The generator is the oracle.
    let ds = logspace(1e3, 1e7, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(0xF17);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let l_inf = 0.1 + 0.9 * rng.random::<f64>();
        let a = 0.5 + 99.5 * rng.random::<f64>();
        let alpha = 0.05 + 0.75 * rng.random::<f64>();
        let curve = LossCurve {
            model_params: 6e8,
            label: format!("case{case}"),
            points: ds.iter().map(|&d| (d, l_inf + a * d.powf(-alpha))).collect(),
        };
        let fit = fit_per_model(&curve).unwrap();
        for (got, want) in [(fit.l_inf, l_inf), (fit.a, a), (fit.alpha, alpha)] {
            let err = rel_err(got, want);
            worst = worst.max(err);
            assert!(
                err < 1e-3,
                "case {case} (l_inf={l_inf}, a={a}, alpha={alpha}): {got} vs {want}"
            );
        }
    }

    // 1% multiplicative noise: median l_inf error under 5% across 100 seeds.
    let mut errors: Vec<f64> = Vec::new();
    for seed in 0..100u64 {
        let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<(f64, f64)> = ds
            .iter()
            .map(|&d| {
                let clean = 0.64 + 12.0 * d.powf(-0.453);
                (d, clean * (1.0 + 0.01 * (2.0 * noise_rng.random::<f64>() - 1.0)))
            })
            .collect();
        let curve = LossCurve { model_params: 6e8, label: "noisy".into(), points };
        let fit = fit_per_model(&curve).unwrap();
        errors.push(rel_err(fit.l_inf, 0.64));
    }
    errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = errors[errors.len() / 2];
    assert!(median <= 0.05, "median l_inf error {median} exceeds 5%");

    // Joint recovery of the general and user-history coefficient sets from
    // noiseless surfaces, within 1% each.
    let ns = [6e8, 1.7e9, 4e9, 8e9];
    let surface_ds = logspace(1e9, 1.6384e11, 8);
    for (name, e, a, alpha, b, beta, _, _) in
        [DOMAIN_FITS[0], DOMAIN_FITS[3]]
    {
        let curves: Vec<LossCurve> = ns
            .iter()
            .map(|&n| LossCurve {
                model_params: n,
                label: format!("{name}-{n:e}"),
                points: surface_ds
                    .iter()
                    .map(|&d| (d, e + a * n.powf(-alpha) + b * d.powf(-beta)))
                    .collect(),
            })
            .collect();
        let fit = fit_joint(&curves).unwrap();
        for (got, want) in [
            (fit.e, e),
            (fit.a, a),
            (fit.alpha, alpha),
            (fit.b, b),
            (fit.beta, beta),
        ] {
            assert!(rel_err(got, want) < 0.01, "{name}: {got} vs {want}");
        }
    }

    println!(
        "[PASS] criterion 03: noiseless recovery worst error {worst:.2e} (<1e-3), noisy \
         median l_inf error {median:.4}, joint surfaces recovered within 1%"
    );
}

#[test]
fn criterion_04_compute_optimal_solver() {
    let mut worst: f64 = 0.0;
    for (name, e, a, alpha, b, beta, _, _) in DOMAIN_FITS {
        let fit = joint_fit(e, a, alpha, b, beta);
        for c in [1e18, 1e20, 1e22] {
            let (n, d, _) = compute_optimal_allocation(&fit, c).unwrap();
            let constraint = ((6.0 * n * d - c) / c).abs();
            let lhs = alpha * a * n.powf(-alpha);
            let rhs = beta * b * d.powf(-beta);
            let condition = (lhs - rhs).abs() / lhs.max(rhs);
            worst = worst.max(constraint).max(condition);
            assert!(constraint < 1e-9, "{name} at C={c:e}: constraint off by {constraint}");
            assert!(condition < 1e-9, "{name} at C={c:e}: condition off by {condition}");
        }
    }
    // Symmetric coefficients force N = D.
    let sym = joint_fit(0.0, 2.5, 0.37, 2.5, 0.37);
    let (n, d, _) = compute_optimal_allocation(&sym, 6.0e12).unwrap();
    assert!(rel_err(n, d) < 1e-9, "symmetric case: N={n} D={d}");
    println!(
        "[PASS] criterion 04: allocations satisfy constraint and optimality to {worst:.2e} \
         (<1e-9); symmetric case balanced"
    );
}

/// Small directed weighted fixture graphs (at most 5 nodes / 8 edges).
fn fixture_graphs() -> Vec<ItemGraph> {
    let make = |edges: &[(&str, &str, f64)]| -> ItemGraph {
        let rules: Vec<AssociationRule> = edges
            .iter()
            .map(|&(a, b, w)| AssociationRule {
                antecedent: a.to_string(),
                consequent: b.to_string(),
                support: 0.1,
                confidence: 0.5,
                lift: w,
                cooccur_count: 1,
            })
            .collect();
        let rs = RuleSet::from_rules(rules).unwrap();
        build_graph(&rs, WeightSource::Lift).unwrap().0
    };
    vec![
        // Worked bias case: from v with prev=t, neighbors {t, x1 (adjacent
        // to t), x2}, unit weights.
        make(&[
            ("t", "v", 1.0),
            ("t", "x1", 1.0),
            ("v", "t", 1.0),
            ("v", "x1", 1.0),
            ("v", "x2", 1.0),
        ]),
        make(&[
            ("a", "b", 2.0),
            ("b", "c", 1.0),
            ("c", "a", 3.0),
            ("a", "c", 0.5),
            ("b", "a", 1.5),
        ]),
        make(&[
            ("s", "a", 1.0),
            ("s", "b", 2.0),
            ("s", "c", 0.25),
            ("s", "d", 1.5),
            ("a", "s", 1.0),
            ("b", "s", 0.5),
        ]),
        make(&[
            ("a", "b", 0.3),
            ("a", "c", 0.1),
            ("b", "c", 1.0),
            ("b", "a", 0.5),
            ("c", "a", 2.0),
            ("c", "b", 0.7),
        ]),
        make(&[
            ("a", "b", 1.0),
            ("a", "e", 0.4),
            ("b", "c", 2.0),
            ("c", "d", 1.0),
            ("d", "a", 3.0),
            ("d", "b", 0.2),
            ("e", "a", 1.0),
            ("e", "c", 0.6),
        ]),
    ]
}

#[test]
fn criterion_05_walk_distribution_oracle() {
    // The worked case is exact: unnormalized (2, 1, 0.5) -> (4/7, 2/7, 1/7).
    let graphs = fixture_graphs();
    let g = &graphs[0];
    let cfg = WalkConfig { p: 0.5, q: 2.0, ..WalkConfig::default() };
    let t = g.node_index("t").unwrap();
    let v = g.node_index("v").unwrap();
    let dist: BTreeMap<u32, f64> =
        transition_distribution(g, Some(t), v, &cfg).into_iter().collect();
    assert!((dist[&t] - 4.0 / 7.0).abs() < 1e-12);
    assert!((dist[&g.node_index("x1").unwrap()] - 2.0 / 7.0).abs() < 1e-12);
    assert!((dist[&g.node_index("x2").unwrap()] - 1.0 / 7.0).abs() < 1e-12);

    // Empirical frequencies from the production sampler, 1e5 draws per
    // (graph, state, config), within 3 standard errors of each outcome.
    let n = 100_000usize;
    let configs: Vec<WalkConfig> = vec![
        WalkConfig { p: 0.5, q: 2.0, ..WalkConfig::default() },
        WalkConfig { p: 1.0, q: 1.0, ..WalkConfig::default() },
        WalkConfig { p: 2.0, q: 0.5, ..WalkConfig::default() },
        WalkConfig { order: WalkOrder::First, ..WalkConfig::default() },
    ];
    let mut states_checked = 0usize;
    for (gi, g) in graphs.iter().enumerate() {
        for (ci, cfg) in configs.iter().enumerate() {
            let mut states: Vec<(Option<u32>, u32)> = Vec::new();
            for cur in 0..g.node_count() as u32 {
                if g.out_degree(cur) == 0 {
                    continue;
                }
                states.push((None, cur));
                if matches!(cfg.order, WalkOrder::Second) {
                    for prev in 0..g.node_count() as u32 {
                        if g.has_edge(prev, cur) {
                            states.push((Some(prev), cur));
                        }
                    }
                }
            }
            for (prev, cur) in states {
                // One fixed stream per (graph, config, state).
                let name = format!("{gi}:{ci}:{prev:?}:{cur}");
                let mut rng = synthrec::seeds::rng_for(synthrec::seeds::stage_seed(0, &name));
                let expected: BTreeMap<u32, f64> =
                    transition_distribution(g, prev, cur, cfg).into_iter().collect();
                let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
                for _ in 0..n {
                    let (next, _) = sample_transition(g, prev, cur, cfg, &mut rng).unwrap();
                    *counts.entry(next).or_insert(0) += 1;
                }
                for (&node, &p) in &expected {
                    let freq = *counts.get(&node).unwrap_or(&0) as f64 / n as f64;
                    let se = (p * (1.0 - p) / n as f64).sqrt();
                    assert!(
                        (freq - p).abs() <= 3.0 * se.max(1e-12),
                        "state (prev={prev:?}, cur={cur}) node {node}: freq {freq} vs p {p}"
                    );
                }
                states_checked += 1;
            }
        }
    }
    println!(
        "[PASS] criterion 05: worked bias case exact; {states_checked} sampled states within \
         3 standard errors at n={n}"
    );
}

/// Independent brute-force association-rule counter.
fn brute_force_rules(log: &SessionizedLog, min_cooccur: u64) -> Vec<AssociationRule> {
    let items: Vec<&String> = log.vocab.iter().collect();
    let n = log.sessions.len() as f64;
    let contains = |s: &Session, x: &str| s.items.iter().any(|i| i == x);
    let mut out = Vec::new();
    for a in &items {
        for b in &items {
            if a == b {
                continue;
            }
            let co = log
                .sessions
                .iter()
                .filter(|s| contains(s, a) && contains(s, b))
                .count() as u64;
            if co < min_cooccur {
                continue;
            }
            let fa = log.sessions.iter().filter(|s| contains(s, a)).count() as u64;
            let fb = log.sessions.iter().filter(|s| contains(s, b)).count() as u64;
            let support = co as f64 / n;
            let confidence = co as f64 / fa as f64;
            let lift = confidence / (fb as f64 / n);
            out.push(AssociationRule {
                antecedent: (*a).clone(),
                consequent: (*b).clone(),
                support,
                confidence,
                lift,
                cooccur_count: co,
            });
        }
    }
    out.sort_by(|x, y| {
        (x.antecedent.as_str(), x.consequent.as_str())
            .cmp(&(y.antecedent.as_str(), y.consequent.as_str()))
    });
    out
}

#[test]
fn criterion_06_rule_mining_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xAB5);
    for case in 0..1000 {
        let n_items = rng.random_range(2..=10usize);
        let n_sessions = rng.random_range(1..=20usize);
        let mut vocab = BTreeSet::new();
        let sessions: Vec<Session> = (0..n_sessions)
            .map(|i| {
                let len = rng.random_range(2..=6usize);
                let items: Vec<String> = (0..len)
                    .map(|_| format!("i{}", rng.random_range(0..n_items)))
                    .collect();
                for it in &items {
                    vocab.insert(it.clone());
                }
                Session { user: format!("u{i}"), items }
            })
            .collect();
        let log = SessionizedLog { sessions, vocab, gap_threshold_ms: 1 };
        let min_cooccur = rng.random_range(1..=2u64);
        let mined = mine_pairwise_rules(&log, min_cooccur, Window::WholeSession).unwrap();
        let oracle = brute_force_rules(&log, min_cooccur);
        assert_eq!(mined.rules.len(), oracle.len(), "case {case}: rule count");
        for (m, o) in mined.rules.iter().zip(&oracle) {
            assert_eq!(m.antecedent, o.antecedent, "case {case}");
            assert_eq!(m.consequent, o.consequent, "case {case}");
            assert_eq!(m.cooccur_count, o.cooccur_count, "case {case}");
            // Identical integer ratios: bit-for-bit equality.
            assert_eq!(m.support, o.support, "case {case}");
            assert_eq!(m.confidence, o.confidence, "case {case}");
            assert_eq!(m.lift, o.lift, "case {case}");
        }
    }
    println!("[PASS] criterion 06: 1000 random session sets match the brute-force counter exactly");
}

// Reference documents reconstructed from their components; the rendered
// bytes must match these fixtures exactly.
const ITEM_TEXT_FIXTURE: &str = "This item <RECTOKEN> REC6594 REC5411 REC1547 REC941 REC7587 \
REC7639 REC3383 REC6576 </RECTOKEN> is described as [redacted] lotus yoga seed bead bracelet, \
by Handmade in Women › Jewelry › Necklaces.";

const CF_FIXTURE: &str = "When a user interacts with item <RECTOKEN> REC3078 REC3311 REC7479 \
REC2862 REC5552 REC4015 REC6914 REC4637 </RECTOKEN>, there is a 4.9% probability they will \
also interact with item <RECTOKEN> REC3078 REC3311 REC7479 REC4015 REC5211 REC2862 REC1723 \
REC6914 </RECTOKEN> (confidence: 0.049, lift: 652.45)";

const UIH_FIXTURE: &str = "A user interacted with the following sequence of items: \
<RECTOKEN> REC870 REC5932 REC6271 REC1852 REC1624 REC409 REC6034 REC3608 </RECTOKEN>, \
<RECTOKEN> REC870 REC5524 REC180 REC4637 REC5552 REC6862 REC6033 REC4948 </RECTOKEN>, \
<RECTOKEN> REC7402 REC1581 REC5202 REC5289 REC2325 REC5067 REC6960 REC73 </RECTOKEN>, \
<RECTOKEN> REC1815 REC4896 REC2334 REC7479 REC4502 REC4861 REC1295 REC6855 </RECTOKEN>, \
<RECTOKEN> REC7479 REC1815 REC2334 REC3927 REC7667 REC2958 REC6513 REC4896 </RECTOKEN>, \
<RECTOKEN> REC1815 REC4224 REC5068 REC2334 REC4861 REC6855 REC7766 REC2410 </RECTOKEN>, \
<RECTOKEN> REC1815 REC2633 REC2433 REC2372 REC650 REC4064 REC2334 REC1295 </RECTOKEN>, \
<RECTOKEN> REC1815 REC5412 REC6298 REC3831 REC6513 REC138 REC5680 REC4210 </RECTOKEN>";

#[test]
fn criterion_07_template_byte_exactness() {
    // Parse each fixture into components, re-render, compare bytes.
    let item = corpus::parse_item_text(ITEM_TEXT_FIXTURE).unwrap();
    assert_eq!(item.tokens.len(), 8);
    let rendered = corpus::render_item_text(&item.tokens, &item.description).unwrap();
    assert_eq!(rendered.text, ITEM_TEXT_FIXTURE);

    let cf = corpus::parse_cf_statement(CF_FIXTURE).unwrap();
    assert_eq!(cf.confidence, 0.049);
    assert_eq!(cf.lift, 652.45);
    let rendered =
        corpus::render_cf_parts(&cf.a_tokens, &cf.b_tokens, cf.confidence, cf.lift).unwrap();
    assert_eq!(rendered.text, CF_FIXTURE);

    let uih = corpus::parse_uih(UIH_FIXTURE).unwrap();
    assert_eq!(uih.len(), 8);
    assert!(uih.iter().all(|g| g.len() == 8));
    let rendered = corpus::render_uih_tokens(&uih).unwrap();
    assert_eq!(rendered.text, UIH_FIXTURE);

    // render-then-parse identity on 10,000 random documents per kind.
    let mut rng = ChaCha8Rng::seed_from_u64(0x7E47);
    let random_tokens = |rng: &mut ChaCha8Rng| -> Vec<String> {
        let len = rng.random_range(1..=10usize);
        (0..len).map(|_| format!("REC{}", rng.random_range(0..100_000u32))).collect()
    };
    let charset: Vec<char> =
        "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 ,.'«»›&-"
            .chars()
            .collect();
    for _ in 0..10_000 {
        let tokens = random_tokens(&mut rng);
        let desc: String = (0..rng.random_range(1..60usize))
            .map(|_| charset[rng.random_range(0..charset.len())])
            .collect();
        let desc = desc.trim().to_string();
        if desc.is_empty() {
            continue;
        }
        let doc = corpus::render_item_text(&tokens, &desc).unwrap();
        let parsed = corpus::parse_item_text(&doc.text).unwrap();
        let again = corpus::render_item_text(&parsed.tokens, &parsed.description).unwrap();
        assert_eq!(again.text, doc.text);
    }
    for _ in 0..10_000 {
        let a = random_tokens(&mut rng);
        let b = random_tokens(&mut rng);
        let conf = (rng.random_range(1..=1000u32)) as f64 / 1000.0;
        let lift = rng.random_range(0..2_000_000u64) as f64 / 100.0;
        let doc = corpus::render_cf_parts(&a, &b, conf, lift).unwrap();
        let parsed = corpus::parse_cf_statement(&doc.text).unwrap();
        let again = corpus::render_cf_parts(
            &parsed.a_tokens,
            &parsed.b_tokens,
            parsed.confidence,
            parsed.lift,
        )
        .unwrap();
        assert_eq!(again.text, doc.text);
    }
    for _ in 0..10_000 {
        let n_groups = rng.random_range(2..=10usize);
        let groups: Vec<Vec<String>> =
            (0..n_groups).map(|_| random_tokens(&mut rng)).collect();
        let doc = corpus::render_uih_tokens(&groups).unwrap();
        let parsed = corpus::parse_uih(&doc.text).unwrap();
        let again = corpus::render_uih_tokens(&parsed).unwrap();
        assert_eq!(again.text, doc.text);
    }
    println!(
        "[PASS] criterion 07: reference documents regenerate byte-for-byte; render/parse \
         identity holds on 10,000 random documents per kind"
    );
}

fn gini_pairwise(counts: &[u64]) -> f64 {
    let n = counts.len() as f64;
    let total: u64 = counts.iter().sum();
    let mut diff = 0.0;
    for &a in counts {
        for &b in counts {
            diff += (a as f64 - b as f64).abs();
        }
    }
    diff / (2.0 * n * total as f64)
}

#[test]
fn criterion_08_gini_oracle() {
    assert_eq!(metrics::gini(&[1, 1, 1, 1]).unwrap(), 0.0);
    assert!((metrics::gini(&[0, 0, 0, 1]).unwrap() - 0.75).abs() < 1e-15);
    assert!((metrics::gini(&[1, 3]).unwrap() - 0.25).abs() < 1e-15);

    let mut rng = ChaCha8Rng::seed_from_u64(0x611);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 1000 {
        let n = rng.random_range(1..=200usize);
        let counts: Vec<u64> = (0..n).map(|_| rng.random_range(0..10_000u64)).collect();
        if counts.iter().sum::<u64>() == 0 {
            continue;
        }
        let fast = metrics::gini(&counts).unwrap();
        let slow = gini_pairwise(&counts);
        let diff = (fast - slow).abs();
        worst = worst.max(diff);
        assert!(diff <= 1e-12, "sorted {fast} vs pairwise {slow}");
        checked += 1;
    }
    println!(
        "[PASS] criterion 08: sorted-form matches pairwise oracle on 1000 vectors \
         (worst |diff| {worst:.2e}); fixed cases 0 / 0.75 / 0.25 exact"
    );
}

/// Planted two-layer construction with well-separated scales; the
/// construction doubles as the oracle.
fn planted(k1: usize, k2: usize, dim: usize, seed: u64) -> EmbeddingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coarse: Vec<Vec<f64>> = (0..k1)
        .map(|_| (0..dim).map(|_| (rng.random::<f64>() - 0.5) * 200.0).collect())
        .collect();
    let fine: Vec<Vec<f64>> = (0..k2)
        .map(|_| (0..dim).map(|_| (rng.random::<f64>() - 0.5) * 2.0).collect())
        .collect();
    let mut data = Vec::new();
    for c in &coarse {
        for f in &fine {
            for d in 0..dim {
                data.push(c[d] + f[d]);
            }
        }
    }
    EmbeddingMatrix::new(k1 * k2, dim, data).unwrap()
}

#[test]
fn criterion_09_rq_kmeans_properties() {
    // Planted reconstruction to <= 1e-6 relative residual.
    let emb = planted(4, 3, 8, 42);
    let book = fit_rq_kmeans(&emb, &[4, 3], 25, 7).unwrap();
    let data_norm: f64 = (0..emb.n_items())
        .map(|i| emb.row(i).iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    let residual: f64 = (0..emb.n_items())
        .map(|i| book.encoding_residual(emb.row(i), 1).unwrap())
        .sum::<f64>()
        .sqrt();
    let rel = residual / data_norm;
    assert!(rel <= 1e-6, "planted reconstruction residual {rel}");

    // Mean prefix-decoding error non-increasing in decoded layers.
    let mut rng = ChaCha8Rng::seed_from_u64(0x99);
    let n = 200;
    let dim = 12;
    let rnd: Vec<f64> = (0..n * dim).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
    let rnd_emb = EmbeddingMatrix::new(n, dim, rnd).unwrap();
    let rnd_book = fit_rq_kmeans(&rnd_emb, &[8, 8, 8], 10, 3).unwrap();
    let ids: Vec<_> = (0..n).map(|i| rnd_book.encode(rnd_emb.row(i), 1).unwrap()).collect();
    let mut prev = f64::INFINITY;
    for prefix in 0..=rnd_book.n_layers() {
        let mse: f64 = (0..n)
            .map(|i| {
                let rec = rnd_book.decode_prefix(&ids[i], prefix).unwrap();
                rnd_emb
                    .row(i)
                    .iter()
                    .zip(&rec)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / n as f64;
        assert!(mse <= prev + 1e-9 * prev.max(1.0), "prefix {prefix} error grew");
        prev = mse;
    }

    // Beam-5 residual never exceeds beam-1 on a random 1000x16 matrix.
    let n = 1000;
    let dim = 16;
    let rnd: Vec<f64> = (0..n * dim).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
    let big = EmbeddingMatrix::new(n, dim, rnd).unwrap();
    let big_book = fit_rq_kmeans(&big, &[8, 8, 8], 8, 5).unwrap();
    for i in 0..n {
        let r1 = big_book.encoding_residual(big.row(i), 1).unwrap();
        let r5 = big_book.encoding_residual(big.row(i), 5).unwrap();
        assert!(r5 <= r1 + 1e-12, "row {i}: beam5 {r5} > beam1 {r1}");
    }

    // Collision rate falls when a layer is added on clustered data.
    let clustered = planted(4, 4, 6, 17);
    let one = fit_rq_kmeans(&clustered, &[4], 20, 3).unwrap();
    let two = fit_rq_kmeans(&clustered, &[4, 4], 20, 3).unwrap();
    let rate_one = collision_rate(&encode_all(&clustered, &one, 1).unwrap()).unwrap();
    let rate_two = collision_rate(&encode_all(&clustered, &two, 1).unwrap()).unwrap();
    assert!(
        rate_two < rate_one,
        "collisions did not fall with an extra layer: {rate_two} vs {rate_one}"
    );

    println!(
        "[PASS] criterion 09: planted residual {rel:.2e}; prefix error monotone; beam-5 \
         dominates beam-1 on 1000x16; collisions fall {rate_one:.2} -> {rate_two:.2} with a layer"
    );
}

#[test]
fn criterion_10_repeats_accounting() {
    // Reference rows: reduced-corpus ratios with their published repeat
    // counts at budget 163.84e9. The unique-token count implied by every
    // row is 0.2e9 (tokens column / repeats column).
    let budget = 163.84e9 as u64;
    let unique = 0.2e9 as u64;
    let rows: [(f64, f64); 5] =
        [(0.005, 4.1), (0.01, 8.2), (0.02, 16.3), (0.05, 40.8), (0.15, 122.3)];
    let mut worst: f64 = 0.0;
    for (ratio, want) in rows {
        let spec = corpus::MixtureSpec {
            domains: vec![
                corpus::MixtureDomain::from_unique_tokens("uih", ratio, unique),
                corpus::MixtureDomain::from_unique_tokens("rest", 1.0 - ratio, 1),
            ],
            total_token_budget: budget,
        };
        let repeats = corpus::estimate_repeats(&spec).unwrap()[0];
        let err = rel_err(repeats, want);
        worst = worst.max(err);
        assert!(err < 0.015, "ratio {ratio}: repeats {repeats} vs {want}");
    }
    println!(
        "[PASS] criterion 10: repeats column reproduced within 1.5% (worst {worst:.4}) at \
         budget 163.84e9"
    );
}

/// Random ground-truth item graph with symmetric affinities: co-engagement
/// strength is a property of the pair, as collaborative-filtering relations
/// are.
fn random_true_graph(n_items: usize, rng: &mut ChaCha8Rng) -> ItemGraph {
    let mut pairs: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for a in 0..n_items {
        let degree = rng.random_range(3..=5usize);
        let mut added = 0;
        while added < degree {
            let b = rng.random_range(0..n_items);
            if b == a {
                continue;
            }
            let confidence = 0.2 + 0.7 * rng.random::<f64>();
            pairs.entry((a.min(b), a.max(b))).or_insert(confidence);
            added += 1;
        }
    }
    let mut rules = Vec::new();
    for (&(a, b), &confidence) in &pairs {
        for (x, y) in [(a, b), (b, a)] {
            rules.push(AssociationRule {
                antecedent: format!("item{x:02}"),
                consequent: format!("item{y:02}"),
                support: confidence * 0.1,
                confidence,
                lift: 1.0,
                cooccur_count: 1,
            });
        }
    }
    build_graph(&RuleSet::from_rules(rules).unwrap(), WeightSource::Confidence)
        .unwrap()
        .0
}

/// Position-biased truncation: a session survives only as the prefix of
/// top-ranked positions, each position surviving with probability decaying
/// in its rank. Prefixes shorter than 2 are lost entirely.
fn position_biased_truncation(
    sequences: &[Vec<String>],
    decay: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for seq in sequences {
        let mut keep = 0usize;
        for pos in 0..seq.len() {
            if rng.random::<f64>() < decay.powi(pos as i32) {
                keep = pos + 1;
            } else {
                break;
            }
        }
        if keep >= 2 {
            out.push(seq[..keep].to_vec());
        }
    }
    out
}

fn log_from_sequences(sequences: &[Vec<String>]) -> SessionizedLog {
    let mut vocab = BTreeSet::new();
    let sessions: Vec<Session> = sequences
        .iter()
        .enumerate()
        .map(|(i, items)| {
            for it in items {
                vocab.insert(it.clone());
            }
            Session { user: format!("u{i}"), items: items.clone() }
        })
        .collect();
    SessionizedLog { sessions, vocab, gap_threshold_ms: 1 }
}

#[test]
fn criterion_11_tstr_direction() {
    let trials = 50;
    let mut wins = 0;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(0x757 + trial);
        let true_graph = random_true_graph(60, &mut rng);

        // Ground-truth behavior: first-order walks on the true graph.
        let gen = |seed: u64, n: usize| -> Vec<Vec<String>> {
            let cfg = WalkConfig {
                order: WalkOrder::First,
                alpha_stop: 0.12,
                min_len: 2,
                max_len: 16,
                n_walks: n,
                seed,
                start_policy: StartPolicy::Uniform,
                ..WalkConfig::default()
            };
            let (walks, _) = generate_corpus_walks(&true_graph, &cfg).unwrap();
            walks_to_sequences(&walks, &true_graph)
        };
        let truth_train = gen(1000 + trial, 120);
        let truth_test = gen(2000 + trial, 200);

        // The observed "real" log keeps only position-biased prefixes.
        let real_train = position_biased_truncation(&truth_train, 0.5, &mut rng);

        // Synthetic data: mine the corrupted log, rebuild a graph, walk it.
        let real_log = log_from_sequences(&real_train);
        let mined = mine_pairwise_rules(&real_log, 1, Window::WholeSession).unwrap();
        let (mined_graph, _) = build_graph(&mined, WeightSource::Confidence).unwrap();
        let syn_cfg = WalkConfig {
            order: WalkOrder::First,
            alpha_stop: 0.2,
            min_len: 2,
            max_len: 12,
            n_walks: 2000,
            seed: 3000 + trial,
            start_policy: StartPolicy::Uniform,
            ..WalkConfig::default()
        };
        let (syn_walks, _) = generate_corpus_walks(&mined_graph, &syn_cfg).unwrap();
        let synthetic = walks_to_sequences(&syn_walks, &mined_graph);

        // Common vocabulary, filtered uncorrupted test set.
        let syn_vocab: BTreeSet<String> = synthetic.iter().flatten().cloned().collect();
        let real_vocab: BTreeSet<String> = real_train.iter().flatten().cloned().collect();
        let common: BTreeSet<String> = syn_vocab.intersection(&real_vocab).cloned().collect();
        let test_sequences: Vec<Vec<String>> = truth_test
            .iter()
            .map(|s| s.iter().filter(|i| common.contains(*i)).cloned().collect::<Vec<_>>())
            .filter(|s: &Vec<String>| s.len() >= 2)
            .collect();
        let test_log = log_from_sequences(&test_sequences);

        let report = run_tstr_trtr(
            &synthetic,
            &real_train,
            &test_log,
            BaselineKind::MarkovBigram,
            &[10],
            &common,
        )
        .unwrap();
        if report.tstr.recall_at[&10] >= report.trtr.recall_at[&10] {
            wins += 1;
        }
    }
    let rate = wins as f64 / trials as f64;
    assert!(
        rate >= 0.8,
        "synthetic training beat real training in only {wins}/{trials} trials"
    );
    println!(
        "[PASS] criterion 11: synthetic-trained recall@10 >= real-trained in {wins}/{trials} \
         trials ({:.0}% >= 80%)",
        rate * 100.0
    );
}

fn tree_files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let entry = entry.unwrap();
            let path = entry.path();
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn criterion_12_end_to_end_determinism() {
    let bin = env!("CARGO_BIN_EXE_synthrec");
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata/toy_pipeline.json");
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("run1");
    let out2 = dir.path().join("run2");

    for (out, threads) in [(&out1, "1"), (&out2, "4")] {
        let status = std::process::Command::new(bin)
            .args([
                "pipeline",
                "--config",
                config.to_str().unwrap(),
                "--out-dir",
                out.to_str().unwrap(),
                "--threads",
                threads,
            ])
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        assert!(status.success(), "pipeline run failed");
    }

    let t1 = tree_files(&out1);
    let t2 = tree_files(&out2);
    assert_eq!(
        t1.keys().collect::<Vec<_>>(),
        t2.keys().collect::<Vec<_>>(),
        "output trees differ in file sets"
    );
    for (name, bytes) in &t1 {
        assert_eq!(bytes, &t2[name], "file {name} differs between runs");
    }

    // The single run also serves as the integration smoke check: every
    // declared artifact exists and is non-empty.
    for required in [
        "sessions.jsonl",
        "train_sessions.jsonl",
        "test_sessions.jsonl",
        "rules.jsonl",
        "graph.bin",
        "walks.jsonl",
        "walk_report.json",
        "codebook.bin",
        "id_map.jsonl",
        "corpus/item_text.txt",
        "corpus/cf.txt",
        "corpus/uih.txt",
        "mixture.txt",
        "mixture_report.json",
        "stats.json",
        "fits.json",
        "eval.json",
    ] {
        let bytes = t1.get(required).unwrap_or_else(|| panic!("missing artifact {required}"));
        assert!(!bytes.is_empty(), "artifact {required} is empty");
    }
    println!(
        "[PASS] criterion 12: two pipeline runs (1 and 4 threads) produced byte-identical \
         trees with {} artifacts",
        t1.len()
    );
}
