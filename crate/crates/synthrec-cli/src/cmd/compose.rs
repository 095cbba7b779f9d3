use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Parser;
use serde::Deserialize;

use synthrec::corpus::{self, DocKind, MixtureDomain, MixtureSpec};

#[derive(Deserialize)]
struct SpecFileDomain {
    path: PathBuf,
    ratio: f64,
    /// Document kind of the file; defaults to opaque pass-through.
    #[serde(default)]
    kind: Option<DocKind>,
}

/// Mixture spec file: {"budget": N, "domains": {"name": {"path", "ratio"}}}.
#[derive(Deserialize)]
struct SpecFile {
    budget: u64,
    domains: BTreeMap<String, SpecFileDomain>,
}

#[derive(Parser)]
pub struct Args {
    /// Mixture spec file (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// Override the mixture file's token budget.
    #[arg(long)]
    pub budget: Option<u64>,
    /// Override one domain ratio, `name=ratio`; repeatable. Remaining
    /// domains are rescaled to keep the total at 1.
    #[arg(long = "ratio")]
    pub ratios: Vec<String>,
    #[arg(long)]
    pub seed: u64,
    /// Output mixed corpus.
    #[arg(long)]
    pub out: PathBuf,
    /// Output mixture report (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<serde_json::Value> {
    let raw = std::fs::read_to_string(&args.spec)
        .with_context(|| format!("reading spec {}", args.spec.display()))?;
    let spec_file: SpecFile = serde_json::from_str(&raw)
        .with_context(|| format!("parsing spec {}", args.spec.display()))?;

    let mut ratios: BTreeMap<String, f64> =
        spec_file.domains.iter().map(|(n, d)| (n.clone(), d.ratio)).collect();
    apply_ratio_overrides(&mut ratios, &args.ratios)?;

    let base = args.spec.parent().unwrap_or_else(|| std::path::Path::new("."));
    let mut domains = Vec::new();
    for (name, d) in &spec_file.domains {
        let path = if d.path.is_absolute() { d.path.clone() } else { base.join(&d.path) };
        let docs = corpus::read_corpus(&path, d.kind.unwrap_or(DocKind::General))?;
        domains.push(MixtureDomain::new(name.clone(), ratios[name], docs));
    }
    let spec = MixtureSpec {
        domains,
        total_token_budget: args.budget.unwrap_or(spec_file.budget),
    };
    let (docs, report) = corpus::compose_mixture(&spec, args.seed)?;
    corpus::write_corpus(&args.out, &docs)?;
    if let Some(path) = &args.report {
        super::write_json(path, &report)?;
    }
    Ok(serde_json::json!({
        "cmd": "compose",
        "docs": docs.len(),
        "total_tokens": report.total_tokens,
        "out": args.out,
    }))
}

/// Pin the named ratios and rescale the others so the total stays 1.
pub fn apply_ratio_overrides(
    ratios: &mut BTreeMap<String, f64>,
    overrides: &[String],
) -> Result<()> {
    if overrides.is_empty() {
        return Ok(());
    }
    let mut pinned: BTreeMap<String, f64> = BTreeMap::new();
    for spec in overrides {
        let (name, value) = spec
            .split_once('=')
            .with_context(|| format!("ratio override '{spec}' must be name=value"))?;
        if !ratios.contains_key(name) {
            bail!("ratio override names unknown domain '{name}'");
        }
        let value: f64 = value.parse().with_context(|| format!("bad ratio in '{spec}'"))?;
        if !(0.0..=1.0).contains(&value) {
            bail!("ratio override '{spec}' outside [0, 1]");
        }
        pinned.insert(name.to_string(), value);
    }
    let pinned_sum: f64 = pinned.values().sum();
    if pinned_sum > 1.0 + 1e-9 {
        bail!("pinned ratios sum to {pinned_sum} > 1");
    }
    let free_sum: f64 = ratios
        .iter()
        .filter(|(n, _)| !pinned.contains_key(*n))
        .map(|(_, r)| r)
        .sum();
    let scale = if free_sum > 0.0 { (1.0 - pinned_sum) / free_sum } else { 0.0 };
    for (name, ratio) in ratios.iter_mut() {
        *ratio = match pinned.get(name) {
            Some(&v) => v,
            None => *ratio * scale,
        };
    }
    Ok(())
}
