use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use serde_json::json;
use ssvh_core::retrieval::{
    map_table, read_codes, read_labels, MapReport, RetrievalDB, DEFAULT_K_TABLE,
};

use crate::commands::resolve_threads;
use crate::manifest::{sibling, Manifest};

#[derive(Args)]
pub struct EvalArgs {
    /// Code database (SSVH-CODE)
    #[arg(long)]
    codes: PathBuf,
    /// Ground-truth labels (SSVH-LABL)
    #[arg(long)]
    labels: PathBuf,
    /// Comma-separated K values to report
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_K_TABLE)]
    topk: Vec<usize>,
    /// Also write the table as CSV
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Worker threads (or SSVH_THREADS); the result does not depend on it
    #[arg(long)]
    threads: Option<usize>,
}

pub fn print_table(reports: &[MapReport]) {
    println!("{:>6} {:>10} {:>10} {:>8}", "K", "mAP@K", "evaluated", "skipped");
    for r in reports {
        println!("{:>6} {:>10.6} {:>10} {:>8}", r.k, r.map, r.evaluated, r.skipped);
    }
}

/// CSV mirror of the table; mAP values are written in full round-trip
/// precision so parsing the file recovers the exact numbers.
pub fn write_csv(reports: &[MapReport], path: &Path) -> anyhow::Result<()> {
    let mut csv = String::from("k,map,evaluated,skipped\n");
    for r in reports {
        csv.push_str(&format!("{},{},{},{}\n", r.k, r.map, r.evaluated, r.skipped));
    }
    std::fs::write(path, csv).with_context(|| format!("writing eval table {}", path.display()))
}

pub fn run(args: EvalArgs) -> anyhow::Result<()> {
    let mut manifest = Manifest::start("eval");
    let threads = resolve_threads(args.threads);
    let codes = read_codes(&args.codes)?;
    let labels = read_labels(&args.labels)?;
    let db = RetrievalDB::new(codes, Some(labels))?;
    let reports = map_table(&db, &args.topk, threads)?;

    print_table(&reports);
    if let Some(csv_path) = &args.csv {
        write_csv(&reports, csv_path)?;
        manifest
            .config(json!({ "topk": args.topk, "threads": threads }))
            .input("codes", &args.codes)
            .input("labels", &args.labels)
            .output("csv", csv_path);
        manifest.write(&sibling(csv_path))?;
    }
    Ok(())
}
