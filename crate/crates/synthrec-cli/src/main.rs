mod cmd;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

fn version_string() -> &'static str {
    static VERSION: std::sync::OnceLock<String> = std::sync::OnceLock::new();
    VERSION.get_or_init(|| {
        format!(
            "{} (schemas: graph={}, embeddings={}, codebook={})",
            env!("CARGO_PKG_VERSION"),
            synthrec::graph::GRAPH_FORMAT_VERSION,
            synthrec::tokenizer::EMBEDDING_FORMAT_VERSION,
            synthrec::tokenizer::CODEBOOK_FORMAT_VERSION,
        )
    })
}

/// Synthetic recommendation-data pipeline: mine CF rules from interaction
/// logs, build the item graph, generate walk-based user histories, mint
/// semantic ids, render and mix training corpora, fit scaling laws, and run
/// train-on-synthetic / train-on-real comparisons.
#[derive(Parser)]
#[command(name = "synthrec", version = version_string())]
struct Cli {
    /// Worker threads for parallel stages (0 = library default). Outputs do
    /// not depend on this setting.
    #[arg(long, global = true, default_value_t = 0, env = "SYNTHREC_THREADS")]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load raw interaction events and write sessionized JSON-lines.
    Ingest(cmd::ingest::Args),
    /// Mine pairwise association rules from sessions.
    Mine(cmd::mine::Args),
    /// Build the binary item graph from mined rules.
    Graph(cmd::graph::Args),
    /// Generate synthetic user histories by biased random walks.
    Walk(cmd::walk::Args),
    /// Run the 14-configuration walk hyperparameter sweep.
    Sweep(cmd::sweep::Args),
    /// Fit an RQ-kmeans codebook and mint semantic ids.
    Tokenize(cmd::tokenize::Args),
    /// Render item-text, CF-statement, or user-history corpora.
    Render(cmd::render::Args),
    /// Compose a token-budgeted training mixture.
    Compose(cmd::compose::Args),
    /// Compute fidelity statistics for a walk corpus.
    Stats(cmd::stats::Args),
    /// Fit scaling laws and compute-optimal allocations.
    Fit(cmd::fit::Args),
    /// Paired train-on-synthetic / train-on-real evaluation.
    Eval(cmd::eval::Args),
    /// Run every stage end to end from a config file.
    Pipeline(cmd::pipeline::Args),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        // Ignore failure: the global pool may already exist under test.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    let result = match cli.command {
        Command::Ingest(args) => cmd::ingest::run(args),
        Command::Mine(args) => cmd::mine::run(args),
        Command::Graph(args) => cmd::graph::run(args),
        Command::Walk(args) => cmd::walk::run(args),
        Command::Sweep(args) => cmd::sweep::run(args),
        Command::Tokenize(args) => cmd::tokenize::run(args),
        Command::Render(args) => cmd::render::run(args),
        Command::Compose(args) => cmd::compose::run(args),
        Command::Stats(args) => cmd::stats::run(args),
        Command::Fit(args) => cmd::fit::run(args),
        Command::Eval(args) => cmd::eval::run(args),
        Command::Pipeline(args) => cmd::pipeline::run(args),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            let (category, code) = categorize(&err);
            let payload = serde_json::json!({
                "error": { "category": category, "message": format!("{err:#}") }
            });
            eprintln!("{payload}");
            ExitCode::from(code)
        }
    }
}

fn categorize(err: &anyhow::Error) -> (&'static str, u8) {
    if let Some(e) = err.downcast_ref::<synthrec::Error>() {
        match e {
            synthrec::Error::InvalidConfig(_) => ("config", 2),
            synthrec::Error::Io { .. }
            | synthrec::Error::Parse { .. }
            | synthrec::Error::Format { .. } => ("io", 3),
            _ => ("data", 4),
        }
    } else {
        ("config", 2)
    }
}
