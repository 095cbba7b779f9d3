pub mod compose;
pub mod eval;
pub mod fit;
pub mod graph;
pub mod ingest;
pub mod mine;
pub mod pipeline;
pub mod render;
pub mod stats;
pub mod sweep;
pub mod tokenize;
pub mod walk;

use anyhow::{bail, Result};

pub(crate) fn parse_window(s: &str) -> Result<synthrec::rules::Window> {
    if s == "whole-session" {
        return Ok(synthrec::rules::Window::WholeSession);
    }
    if let Some(k) = s.strip_prefix("adjacent:") {
        let k: usize = k.parse()?;
        return Ok(synthrec::rules::Window::Adjacent(k));
    }
    bail!("window must be 'whole-session' or 'adjacent:<k>', got '{s}'")
}

pub(crate) fn parse_weight_source(s: &str) -> Result<synthrec::graph::WeightSource> {
    Ok(match s {
        "confidence" => synthrec::graph::WeightSource::Confidence,
        "lift" => synthrec::graph::WeightSource::Lift,
        "support" => synthrec::graph::WeightSource::Support,
        other => bail!("weight source must be confidence|lift|support, got '{other}'"),
    })
}

/// Layer spec: either `LxK` shorthand (e.g. `6x256`) or a comma list
/// (e.g. `256,256,128`).
pub(crate) fn parse_layers(s: &str) -> Result<Vec<usize>> {
    if let Some((l, k)) = s.split_once('x') {
        let l: usize = l.parse()?;
        let k: usize = k.parse()?;
        if l == 0 || k == 0 {
            bail!("layer spec '{s}' must be positive");
        }
        return Ok(vec![k; l]);
    }
    let layers: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()?;
    if layers.is_empty() || layers.contains(&0) {
        bail!("layer list '{s}' must be non-empty and positive");
    }
    Ok(layers)
}

pub(crate) fn parse_ks(s: &str) -> Result<Vec<usize>> {
    let ks: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()?;
    if ks.is_empty() || ks.windows(2).any(|w| w[0] >= w[1]) {
        bail!("K list '{s}' must be ascending");
    }
    Ok(ks)
}

pub(crate) fn parse_baseline(s: &str) -> Result<synthrec::eval::BaselineKind> {
    Ok(match s {
        "markov-bigram" => synthrec::eval::BaselineKind::MarkovBigram,
        "item-knn" => synthrec::eval::BaselineKind::ItemKnn,
        "popularity" => synthrec::eval::BaselineKind::Popularity,
        other => bail!("model must be markov-bigram|item-knn|popularity, got '{other}'"),
    })
}

pub(crate) fn write_json(path: &std::path::Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
