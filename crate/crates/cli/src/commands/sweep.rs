use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, ValueEnum};
use serde_json::json;
use ssvh_core::datagen::{read_features, Dataset};
use ssvh_core::neighborhood::{build_graph_sharded, mean_pool_all, NeighborGraph};
use ssvh_core::retrieval::{hash_dataset, map_table, read_labels, MapReport, DEFAULT_K_TABLE};
use ssvh_core::trainer::{save_checkpoint, train, TrainConfig};

use crate::commands::resolve_threads;
use crate::commands::train::{config_json, resolve_config, write_loss_csv, TrainKnobs};
use crate::manifest::Manifest;
use crate::UsageError;

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Lambda,
    K1,
    K2,
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::Lambda => "lambda",
            SweepParam::K1 => "k1",
            SweepParam::K2 => "k2",
        }
    }
}

/// λ values re-examined when --values is omitted: both endpoints and the
/// decades between them.
const LAMBDA_GRID: [&str; 6] = ["0", "1e-4", "1e-3", "1e-2", "1e-1", "1"];

#[derive(Args)]
pub struct SweepArgs {
    /// Training features (SSVH-FEAT)
    #[arg(long)]
    features: PathBuf,
    /// Labels for the evaluation half of each run (SSVH-LABL)
    #[arg(long)]
    labels: PathBuf,
    /// Fixed graph for lambda sweeps (k1/k2 sweeps rebuild it per value)
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Which hyperparameter to vary
    #[arg(long, value_enum)]
    param: SweepParam,
    /// Comma-separated grid; defaults to the standard λ grid for lambda
    #[arg(long, value_delimiter = ',')]
    values: Vec<String>,
    /// Output directory (per-value subdirectories plus sweep.csv)
    #[arg(long)]
    out: PathBuf,
    /// TOML config file for the shared base recipe
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (or SSVH_THREADS); the result does not depend on it
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    knobs: TrainKnobs,
}

fn grid(args: &SweepArgs) -> Result<Vec<String>, UsageError> {
    if !args.values.is_empty() {
        return Ok(args.values.clone());
    }
    match args.param {
        SweepParam::Lambda => Ok(LAMBDA_GRID.iter().map(|s| s.to_string()).collect()),
        other => Err(UsageError(format!(
            "--values is required when sweeping {}; only lambda has a built-in grid",
            other.name()
        ))),
    }
}

fn apply_value(cfg: &mut TrainConfig, param: SweepParam, raw: &str) -> Result<(), UsageError> {
    match param {
        SweepParam::Lambda => {
            cfg.lambda = raw
                .parse()
                .map_err(|_| UsageError(format!("cannot parse lambda value {raw:?}")))?;
        }
        SweepParam::K1 => {
            cfg.k1 =
                raw.parse().map_err(|_| UsageError(format!("cannot parse k1 value {raw:?}")))?;
        }
        SweepParam::K2 => {
            cfg.k2 =
                raw.parse().map_err(|_| UsageError(format!("cannot parse k2 value {raw:?}")))?;
        }
    }
    Ok(())
}

pub fn run(args: SweepArgs) -> anyhow::Result<()> {
    let mut top_manifest = Manifest::start("sweep");
    let threads = resolve_threads(args.threads);
    let values = grid(&args)?;
    if args.graph.is_some() && args.param != SweepParam::Lambda {
        return Err(UsageError(format!(
            "--graph only applies to lambda sweeps; a {} sweep rebuilds the graph per value",
            args.param.name()
        ))
        .into());
    }

    let ds: Dataset<f64> = read_features(&args.features)?;
    let labels = read_labels(&args.labels)?;
    if labels.len() != ds.len() {
        return Err(ssvh_core::error::Error::invalid(
            "sweep",
            format!("{} labels for {} videos", labels.len(), ds.len()),
        )
        .into());
    }
    let mut base_cfg = resolve_config(args.config.as_deref(), &args.knobs)?;
    base_cfg.batch_size = base_cfg.batch_size.min(ds.len());

    // A lambda sweep shares one graph across values; read it or build it
    // once. K sweeps derive a fresh graph from each grid point.
    let pooled = mean_pool_all(ds.videos())?;
    let shared_graph: Option<NeighborGraph> = match args.param {
        SweepParam::Lambda => Some(match &args.graph {
            Some(path) => NeighborGraph::read(path)?,
            None => build_graph_sharded(&pooled, base_cfg.k1, base_cfg.k2, 1, threads)?,
        }),
        _ => None,
    };

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    // mAP@K clamps K to the n-1 available candidates, so on small datasets
    // several standard cutoffs collapse into one; evaluate each once.
    let mut ks: Vec<usize> =
        DEFAULT_K_TABLE.iter().map(|&k| k.min(ds.len().saturating_sub(1)).max(1)).collect();
    ks.dedup();

    let mut rows: Vec<(String, Vec<MapReport>)> = Vec::new();
    for raw in &values {
        let mut cfg = base_cfg.clone();
        apply_value(&mut cfg, args.param, raw)?;
        let graph = match &shared_graph {
            Some(g) => g.clone(),
            None => build_graph_sharded(&pooled, cfg.k1, cfg.k2, 1, threads)?,
        };

        let dir = args.out.join(format!("{}-{raw}", args.param.name()));
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut manifest = Manifest::start("sweep");
        let ck = train(&ds, &graph, &cfg)?;
        save_checkpoint(&ck, &dir.join("model.ckpt"))?;
        write_loss_csv(&ck.history, &dir.join("loss.csv"))?;

        let db =
            hash_dataset(&ck.params, ds.videos(), cfg.activation.binarize(), Some(labels.clone()))?;
        let reports = map_table(&db, &ks, threads)?;
        super::eval::write_csv(&reports, &dir.join("eval.csv"))?;

        manifest
            .seed(cfg.seed)
            .config(json!({
                "param": args.param.name(),
                "value": raw,
                "base": config_json(&cfg),
            }))
            .input("features", &args.features)
            .input("labels", &args.labels)
            .output("checkpoint", &dir.join("model.ckpt"))
            .output("loss_csv", &dir.join("loss.csv"))
            .output("eval_csv", &dir.join("eval.csv"));
        manifest.write(&dir.join("manifest.json"))?;

        let headline = reports.get(1).or_else(|| reports.first()).expect("non-empty k table");
        println!("{} = {raw}: mAP@{} {:.6}", args.param.name(), headline.k, headline.map);
        rows.push((raw.clone(), reports));
    }

    // Wide human-readable table, long-form CSV.
    print!("{:>10}", "value");
    for k in &ks {
        print!(" {:>9}", format!("mAP@{k}"));
    }
    println!();
    for (raw, reports) in &rows {
        print!("{raw:>10}");
        for r in reports {
            print!(" {:>9.6}", r.map);
        }
        println!();
    }
    let mut csv = String::from("param,value,k,map,evaluated,skipped\n");
    for (raw, reports) in &rows {
        for r in reports {
            csv.push_str(&format!(
                "{},{raw},{},{},{},{}\n",
                args.param.name(),
                r.k,
                r.map,
                r.evaluated,
                r.skipped
            ));
        }
    }
    let sweep_csv = args.out.join("sweep.csv");
    std::fs::write(&sweep_csv, csv)
        .with_context(|| format!("writing sweep table {}", sweep_csv.display()))?;

    top_manifest
        .seed(base_cfg.seed)
        .config(json!({
            "param": args.param.name(),
            "values": values,
            "base": config_json(&base_cfg),
            "threads": threads,
        }))
        .input("features", &args.features)
        .input("labels", &args.labels)
        .output("table", &sweep_csv);
    top_manifest.write(&args.out.join("manifest.json"))?;
    Ok(())
}
