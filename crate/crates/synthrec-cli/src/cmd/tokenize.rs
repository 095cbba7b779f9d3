use std::path::PathBuf;

use anyhow::Result;
use clap::Parser;

use synthrec::tokenizer;

#[derive(Parser)]
pub struct Args {
    /// Binary embedding matrix.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Item-id sidecar, one id per embedding row.
    #[arg(long)]
    pub items: PathBuf,
    /// Codebook shape: `LxK` (e.g. 6x256) or a comma list of layer sizes.
    #[arg(long, default_value = "6x256")]
    pub layers: String,
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    #[arg(long)]
    pub seed: u64,
    /// Beam width for progressive-search encoding.
    #[arg(long, default_value_t = 5)]
    pub beam: usize,
    /// Output codebook file.
    #[arg(long)]
    pub codebook: PathBuf,
    /// Output id map (JSON-lines of item -> REC tokens).
    #[arg(long)]
    pub id_map: PathBuf,
}

pub fn run(args: Args) -> Result<serde_json::Value> {
    let layers = super::parse_layers(&args.layers)?;
    let emb = tokenizer::read_embeddings(&args.embeddings)?;
    let items = tokenizer::read_item_ids(&args.items)?;
    if items.len() != emb.n_items() {
        anyhow::bail!(
            "item sidecar has {} ids but embedding matrix has {} rows",
            items.len(),
            emb.n_items()
        );
    }
    let book = tokenizer::fit_rq_kmeans(&emb, &layers, args.iters, args.seed)?;
    let ids = tokenizer::encode_all(&emb, &book, args.beam)?;
    let collision = tokenizer::collision_rate(&ids)?;
    let map = tokenizer::SemanticIdMap::build(&items, &ids, &book)?;
    tokenizer::write_codebook(&args.codebook, &book)?;
    tokenizer::write_id_map(&args.id_map, &map)?;
    Ok(serde_json::json!({
        "cmd": "tokenize",
        "items": items.len(),
        "layers": layers,
        "collision_rate": collision,
        "codebook": args.codebook,
        "id_map": args.id_map,
    }))
}
