use std::path::PathBuf;

use clap::Args;
use serde_json::json;
use ssvh_core::datagen::read_features;
use ssvh_core::neighborhood::{build_graph_sharded, mean_pool_all};

use crate::commands::resolve_threads;
use crate::manifest::{sibling, Manifest};

#[derive(Args)]
pub struct BuildGraphArgs {
    /// Feature file to build the graph over
    #[arg(long)]
    features: PathBuf,
    /// Nearest neighbors per video in pooled cosine space
    #[arg(long, default_value_t = 20)]
    k1: usize,
    /// Neighbor lists unioned per video in the expansion step
    #[arg(long, default_value_t = 10)]
    k2: usize,
    /// Split the dataset into this many contiguous independent parts
    #[arg(long, default_value_t = 1)]
    shards: usize,
    /// Worker threads (or SSVH_THREADS); the result does not depend on it
    #[arg(long)]
    threads: Option<usize>,
    /// Output adjacency file
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: BuildGraphArgs) -> anyhow::Result<()> {
    let mut manifest = Manifest::start("build-graph");
    let threads = resolve_threads(args.threads);
    let ds = read_features::<f64>(&args.features)?;
    let pooled = mean_pool_all(ds.videos())?;
    let graph = build_graph_sharded(&pooled, args.k1, args.k2, args.shards, threads)?;
    graph.write(&args.out)?;

    manifest
        .config(json!({
            "k1": args.k1,
            "k2": args.k2,
            "shards": args.shards,
            "threads": threads,
        }))
        .input("features", &args.features)
        .output("graph", &args.out);
    manifest.write(&sibling(&args.out))?;
    println!(
        "graph over {} videos: {} edges ({} shards)",
        graph.len(),
        graph.edge_count(),
        args.shards
    );
    Ok(())
}
