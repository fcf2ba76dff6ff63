use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use serde_json::json;
use ssvh_core::datagen::{generate, write_features, SyntheticSpec};
use ssvh_core::retrieval::write_labels;

use crate::manifest::Manifest;

#[derive(Args)]
pub struct GenDataArgs {
    /// Number of videos
    #[arg(long)]
    n: usize,
    /// Number of clusters (labels)
    #[arg(long)]
    clusters: usize,
    /// Frames per video
    #[arg(long, default_value_t = 24)]
    m: usize,
    /// Per-frame feature dimension
    #[arg(long, default_value_t = 64)]
    d: usize,
    /// Minimum distance between cluster centers
    #[arg(long, default_value_t = 10.0)]
    separation: f64,
    /// Per-entry gaussian noise (standard deviation)
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    /// Per-step mean shift along each cluster's drift direction
    #[arg(long, default_value_t = 0.2)]
    drift: f64,
    /// Seed for the generator; same seed, same dataset
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output directory (receives features.bin, labels.bin, manifest.json)
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: GenDataArgs) -> anyhow::Result<()> {
    let mut manifest = Manifest::start("gen-data");
    let spec = SyntheticSpec {
        n_videos: args.n,
        n_clusters: args.clusters,
        frames: args.m,
        dim: args.d,
        cluster_separation: args.separation,
        within_noise: args.noise,
        temporal_drift: args.drift,
        seed: args.seed,
    };
    let ds = generate(&spec)?;

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let features = args.out.join("features.bin");
    let labels = args.out.join("labels.bin");
    write_features(&ds, &features)?;
    write_labels(ds.labels().expect("generator always labels"), &labels)?;

    manifest
        .seed(args.seed)
        .config(json!({
            "n": args.n,
            "clusters": args.clusters,
            "m": args.m,
            "d": args.d,
            "separation": args.separation,
            "noise": args.noise,
            "drift": args.drift,
            "seed": args.seed,
        }))
        .output("features", &features)
        .output("labels", &labels);
    manifest.write(&args.out.join("manifest.json"))?;
    println!("wrote {} videos ({} clusters) to {}", args.n, args.clusters, args.out.display());
    Ok(())
}
