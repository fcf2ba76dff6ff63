use std::path::PathBuf;

use anyhow::bail;
use clap::Args;
use ssvh_core::datagen::{read_features, Dataset};
use ssvh_core::retrieval::{hash_dataset, write_codes};
use ssvh_core::trainer::{load_checkpoint, Checkpoint};

use crate::commands::train::config_json;
use crate::manifest::{sibling, Manifest};

#[derive(Args)]
pub struct EncodeArgs {
    /// Trained model checkpoint
    #[arg(long)]
    checkpoint: PathBuf,
    /// Features to encode (SSVH-FEAT)
    #[arg(long)]
    features: PathBuf,
    /// Output codes file (SSVH-CODE)
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: EncodeArgs) -> anyhow::Result<()> {
    let mut manifest = Manifest::start("encode");
    let ck: Checkpoint<f64> = load_checkpoint(&args.checkpoint)?;
    let ds: Dataset<f64> = read_features(&args.features)?;
    if ds.dim() != ck.input_dim {
        bail!(
            "checkpoint {} expects {}-dimensional features, {} holds {}-dimensional ones",
            args.checkpoint.display(),
            ck.input_dim,
            args.features.display(),
            ds.dim()
        );
    }
    if ds.frames() != ck.config.frames {
        bail!(
            "checkpoint {} expects {} frames per video, {} holds {}",
            args.checkpoint.display(),
            ck.config.frames,
            args.features.display(),
            ds.frames()
        );
    }

    let db = hash_dataset(&ck.params, ds.videos(), ck.config.activation.binarize(), None)?;
    write_codes(db.codes(), &args.out)?;

    manifest
        .config(config_json(&ck.config))
        .input("checkpoint", &args.checkpoint)
        .input("features", &args.features)
        .output("codes", &args.out);
    manifest.write(&sibling(&args.out))?;
    println!("encoded {} videos into {}-bit codes", db.len(), db.code_len());
    Ok(())
}
