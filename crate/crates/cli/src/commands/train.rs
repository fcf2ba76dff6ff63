use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use serde::Deserialize;
use serde_json::json;
use ssvh_core::datagen::{read_features, Dataset};
use ssvh_core::neighborhood::NeighborGraph;
use ssvh_core::trainer::{
    self, load_checkpoint, save_checkpoint, Activation, Checkpoint, LossRecord, TrainConfig,
};

use crate::manifest::{sibling, Manifest};
use crate::UsageError;

fn parse_activation(s: &str) -> Result<Activation, String> {
    s.parse().map_err(|e: ssvh_core::error::Error| e.to_string())
}

/// The training knobs every training-like command shares. All optional:
/// unset knobs fall back to the config file, then to built-in defaults.
#[derive(Args, Clone)]
pub struct TrainKnobs {
    /// Binary code length L
    #[arg(long)]
    pub code_len: Option<usize>,
    /// Temporal stride between encoder layers
    #[arg(long)]
    pub stride: Option<usize>,
    /// Frames per video the model expects
    #[arg(long)]
    pub frames: Option<usize>,
    /// First-layer hidden width
    #[arg(long)]
    pub h1: Option<usize>,
    /// Decoder second-layer hidden width
    #[arg(long)]
    pub h2: Option<usize>,
    /// Steps the global decoder runs
    #[arg(long)]
    pub global_steps: Option<usize>,
    /// Reconstruction weight λ in [0, 1]
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Quantization-penalty weight η
    #[arg(long)]
    pub eta: Option<f64>,
    /// Initial learning rate
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    /// Epoch budget
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size (capped at the dataset size)
    #[arg(long = "batch")]
    pub batch_size: Option<usize>,
    /// Seed for initialization and shuffling; same seed, same run
    #[arg(long)]
    pub seed: Option<u64>,
    /// Binary-layer activation: hard_sgn_ste or tanh_relax
    #[arg(long, value_parser = parse_activation)]
    pub activation: Option<Activation>,
    /// Recorded provenance: graph K1
    #[arg(long)]
    pub k1: Option<usize>,
    /// Recorded provenance: graph K2
    #[arg(long)]
    pub k2: Option<usize>,
}

/// Optional config-file counterpart of [`TrainKnobs`]; same field names in
/// TOML. Unknown keys are rejected so typos fail loudly.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    code_len: Option<usize>,
    stride: Option<usize>,
    frames: Option<usize>,
    h1: Option<usize>,
    h2: Option<usize>,
    global_steps: Option<usize>,
    lambda: Option<f64>,
    eta: Option<f64>,
    learning_rate: Option<f64>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    seed: Option<u64>,
    activation: Option<String>,
    k1: Option<usize>,
    k2: Option<usize>,
}

macro_rules! overlay {
    ($cfg:expr, $src:expr, [$($field:ident),+ $(,)?]) => {
        $(if let Some(v) = $src.$field { $cfg.$field = v; })+
    };
}

/// Layer the configuration: built-in defaults, then the TOML file, then
/// explicit flags.
pub fn resolve_config(
    config_file: Option<&Path>,
    knobs: &TrainKnobs,
) -> anyhow::Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(path) = config_file {
        let text =
            std::fs::read_to_string(path).map_err(|e| ssvh_core::error::Error::io(path, e))?;
        let file: FileConfig = toml::from_str(&text)
            .map_err(|e| ssvh_core::error::Error::format(path, e.to_string()))?;
        overlay!(
            cfg,
            file,
            [
                code_len,
                stride,
                frames,
                h1,
                h2,
                global_steps,
                lambda,
                eta,
                learning_rate,
                epochs,
                batch_size,
                seed,
                k1,
                k2,
            ]
        );
        if let Some(name) = file.activation {
            cfg.activation = name.parse().map_err(|e: ssvh_core::error::Error| {
                ssvh_core::error::Error::format(path, e.to_string())
            })?;
        }
    }
    let flags = knobs.clone();
    overlay!(
        cfg,
        flags,
        [
            code_len,
            stride,
            frames,
            h1,
            h2,
            global_steps,
            lambda,
            eta,
            learning_rate,
            epochs,
            batch_size,
            seed,
            activation,
            k1,
            k2,
        ]
    );
    Ok(cfg)
}

pub fn config_json(cfg: &TrainConfig) -> serde_json::Value {
    json!({
        "code_len": cfg.code_len,
        "stride": cfg.stride,
        "frames": cfg.frames,
        "h1": cfg.h1,
        "h2": cfg.h2,
        "global_steps": cfg.global_steps,
        "lambda": cfg.lambda,
        "eta": cfg.eta,
        "learning_rate": cfg.learning_rate,
        "batch_size": cfg.batch_size,
        "epochs": cfg.epochs,
        "seed": cfg.seed,
        "activation": cfg.activation.to_string(),
        "k1": cfg.k1,
        "k2": cfg.k2,
    })
}

pub fn write_loss_csv(history: &[LossRecord], path: &Path) -> anyhow::Result<()> {
    let mut csv = String::from("epoch,recon,neighbor,total\n");
    for rec in history {
        csv.push_str(&format!("{},{},{},{}\n", rec.epoch, rec.recon, rec.neighbor, rec.total));
    }
    std::fs::write(path, csv).with_context(|| format!("writing loss history {}", path.display()))
}

#[derive(Args)]
pub struct TrainArgs {
    /// Training features (SSVH-FEAT)
    #[arg(long)]
    features: PathBuf,
    /// Neighborhood graph over the same videos (SSVH-NBRG)
    #[arg(long)]
    graph: PathBuf,
    /// Output checkpoint file
    #[arg(long)]
    out: PathBuf,
    /// TOML config file; explicit flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Continue from this checkpoint (only --epochs may differ)
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Loss history CSV path (default: <out>.loss.csv)
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    #[command(flatten)]
    knobs: TrainKnobs,
}

/// Resuming re-applies the stored recipe; any knob flag that contradicts
/// it (except an extended --epochs) is a mistake worth stopping for.
fn reject_resume_conflicts(knobs: &TrainKnobs, stored: &TrainConfig) -> Result<(), UsageError> {
    macro_rules! conflict {
        ($($flag:literal => $field:ident),+ $(,)?) => {
            $(if let Some(v) = knobs.$field {
                if v != stored.$field {
                    return Err(UsageError(format!(
                        "--{} {} conflicts with the checkpoint's {} {}; drop the flag or retrain",
                        $flag, v, $flag, stored.$field
                    )));
                }
            })+
        };
    }
    conflict!(
        "code-len" => code_len, "stride" => stride, "frames" => frames, "h1" => h1,
        "h2" => h2, "global-steps" => global_steps, "lambda" => lambda, "eta" => eta,
        "lr" => learning_rate, "batch" => batch_size, "seed" => seed, "k1" => k1, "k2" => k2,
    );
    if let Some(a) = knobs.activation {
        if a != stored.activation {
            return Err(UsageError(format!(
                "--activation {a} conflicts with the checkpoint's {}; drop the flag or retrain",
                stored.activation
            )));
        }
    }
    Ok(())
}

pub fn run(args: TrainArgs) -> anyhow::Result<()> {
    let mut manifest = Manifest::start("train");
    let ds: Dataset<f64> = read_features(&args.features)?;
    let graph = NeighborGraph::read(&args.graph)?;

    let ck: Checkpoint<f64> = if let Some(resume_path) = &args.resume {
        if args.config.is_some() {
            return Err(UsageError("--config cannot be combined with --resume".into()).into());
        }
        let mut ck = load_checkpoint::<f64>(resume_path)?;
        reject_resume_conflicts(&args.knobs, &ck.config)?;
        if let Some(epochs) = args.knobs.epochs {
            ck.config.epochs = epochs;
        }
        manifest.input("resume", resume_path);
        trainer::resume(&ds, &graph, ck)?
    } else {
        let mut cfg = resolve_config(args.config.as_deref(), &args.knobs)?;
        cfg.batch_size = cfg.batch_size.min(ds.len());
        trainer::train(&ds, &graph, &cfg)?
    };

    save_checkpoint(&ck, &args.out)?;
    let csv_path = args
        .loss_csv
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.loss.csv", args.out.display())));
    write_loss_csv(&ck.history, &csv_path)?;

    manifest
        .seed(ck.config.seed)
        .config(config_json(&ck.config))
        .input("features", &args.features)
        .input("graph", &args.graph)
        .output("checkpoint", &args.out)
        .output("loss_csv", &csv_path);
    manifest.write(&sibling(&args.out))?;

    let last = ck.history.last();
    println!(
        "trained to epoch {} (recon {:.6}, neighbor {:.6}, total {:.6})",
        ck.epoch,
        last.map_or(f64::NAN, |r| r.recon),
        last.map_or(f64::NAN, |r| r.neighbor),
        last.map_or(f64::NAN, |r| r.total),
    );
    Ok(())
}
