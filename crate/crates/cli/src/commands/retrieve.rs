use std::path::PathBuf;

use clap::Args;
use serde_json::json;
use ssvh_core::error::Error;
use ssvh_core::retrieval::{hamming_distance, read_codes, RetrievalDB};

use crate::manifest::Manifest;

#[derive(Args)]
pub struct RetrieveArgs {
    /// Code database (SSVH-CODE)
    #[arg(long)]
    codes: PathBuf,
    /// Which database entry to use as the query
    #[arg(long)]
    query_index: usize,
    /// How many hits to print
    #[arg(long, default_value_t = 10)]
    topk: usize,
    /// Drop the query itself from the ranking
    #[arg(long)]
    exclude_self: bool,
    /// Optionally record a manifest (results go to standard output)
    #[arg(long)]
    manifest: Option<PathBuf>,
}

pub fn run(args: RetrieveArgs) -> anyhow::Result<()> {
    let mut manifest = Manifest::start("retrieve");
    let db = RetrievalDB::new(read_codes(&args.codes)?, None)?;
    if args.query_index >= db.len() {
        return Err(Error::invalid(
            "retrieve",
            format!("query index {} out of range for {} codes", args.query_index, db.len()),
        )
        .into());
    }

    let query = db.code(args.query_index).clone();
    let ranked = db.rank(&query, args.exclude_self.then_some(args.query_index))?;
    let shown = args.topk.min(ranked.len());
    if args.topk > ranked.len() {
        eprintln!(
            "warning: --topk {} exceeds the {} available candidates; returning all",
            args.topk,
            ranked.len()
        );
    }

    println!("rank\tindex\tdistance");
    for (rank, &idx) in ranked[..shown].iter().enumerate() {
        let dist = hamming_distance(&query, db.code(idx))?;
        println!("{}\t{}\t{}", rank + 1, idx, dist);
    }

    if let Some(path) = &args.manifest {
        manifest
            .config(json!({
                "query_index": args.query_index,
                "topk": args.topk,
                "exclude_self": args.exclude_self,
            }))
            .input("codes", &args.codes);
        manifest.write(path)?;
    }
    Ok(())
}
