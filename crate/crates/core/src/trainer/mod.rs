//! Mini-batch SGD over the combined objective: λ-weighted reconstruction
//! plus (1−λ)-weighted neighborhood agreement, with an epoch loop, loss
//! history, and resumable checkpoints.
//!
//! Both loss terms are averaged (reconstruction over batch members,
//! neighborhood over in-batch pairs) so λ keeps its meaning across batch
//! sizes. Plain SGD, no momentum; the learning rate drops ×0.1 after each
//! third of the epoch budget, and gradients are clipped by global norm.
//! Any non-finite loss or gradient aborts with a diagnostic naming the
//! epoch, batch, and term — training never silently skips a batch.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint};

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::autoencoder::{model_backward, run_batch, ModelDims, ModelParams};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::neighborhood::{batch_neighbor_loss, NeighborGraph};
use crate::numerics::{Matrix, Mode};
use crate::recurrent::Binarize;
use crate::scalar::Scalar;

/// Gradient global-norm ceiling; recurrent nets occasionally spike.
pub const GRAD_CLIP_NORM: f64 = 5.0;
/// Learning-rate multiplier applied after each third of the epoch budget.
pub const LR_DECAY_FACTOR: f64 = 0.1;

/// Which nonlinearity the binary layer trains with. Codes are hard signs
/// either way; this only changes the recurrent signal and the gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// Hard sgn forward, straight-through gradient gate.
    HardSgnSte,
    /// tanh recurrent signal, exact gradients; codes still sgn(h).
    TanhRelax,
}

impl Activation {
    pub fn binarize(self) -> Binarize {
        match self {
            Activation::HardSgnSte => Binarize::Hard,
            Activation::TanhRelax => Binarize::Tanh,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::HardSgnSte => "hard_sgn_ste",
            Activation::TanhRelax => "tanh_relax",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard_sgn_ste" => Ok(Activation::HardSgnSte),
            "tanh_relax" => Ok(Activation::TanhRelax),
            other => Err(Error::invalid(
                "Activation",
                format!("unknown activation {other:?}, expected hard_sgn_ste or tanh_relax"),
            )),
        }
    }
}

/// The full training recipe. K1/K2 do not influence training itself (the
/// graph is built upstream) but are recorded for provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub code_len: usize,
    pub stride: usize,
    pub frames: usize,
    pub h1: usize,
    pub h2: usize,
    pub global_steps: usize,
    /// Reconstruction weight in [0, 1]; the neighborhood term gets 1−λ.
    pub lambda: f64,
    /// Quantization-penalty weight in the neighborhood loss.
    pub eta: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub activation: Activation,
    pub k1: usize,
    pub k2: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            code_len: 64,
            stride: 2,
            frames: 24,
            h1: 256,
            h2: 256,
            global_steps: 1,
            lambda: 1e-3,
            eta: 0.2,
            learning_rate: 0.01,
            batch_size: 256,
            epochs: 50,
            seed: 42,
            activation: Activation::HardSgnSte,
            k1: 20,
            k2: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(
                "TrainConfig",
                format!("lambda {} not in [0, 1]", self.lambda),
            ));
        }
        if self.eta < 0.0 {
            return Err(Error::invalid("TrainConfig", format!("eta {} is negative", self.eta)));
        }
        // Negated on purpose: a NaN learning rate must land in the error branch.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("TrainConfig", "learning rate must be positive"));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid(
                "TrainConfig",
                "batch size must be at least 2 (batch norm)",
            ));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("TrainConfig", "at least one epoch required"));
        }
        // Structural constraints (frames divisible by stride, positive
        // widths) are shared with the model shape.
        self.dims(1).validate()
    }

    /// Model shape for a given per-frame feature width.
    pub fn dims(&self, input_dim: usize) -> ModelDims {
        ModelDims {
            input_dim,
            frames: self.frames,
            stride: self.stride,
            h1: self.h1,
            h2: self.h2,
            code_len: self.code_len,
            global_steps: self.global_steps,
        }
    }
}

/// One epoch's mean losses. `total` always equals
/// λ·recon + (1−λ)·neighbor exactly as written.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    /// 1-based epoch number; resumed runs keep counting.
    pub epoch: usize,
    pub recon: f64,
    pub neighbor: f64,
    pub total: f64,
}

/// Everything needed to continue (or deploy) a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub config: TrainConfig,
    /// Per-frame feature width the model was built for.
    pub input_dim: usize,
    pub params: ModelParams<T>,
    /// Epochs completed so far.
    pub epoch: usize,
    /// Shuffle stream, positioned exactly where training left off.
    pub rng: ChaCha20Rng,
    pub history: Vec<LossRecord>,
}

impl<T: Scalar> Checkpoint<T> {
    /// Guard against resuming with a structurally different recipe.
    pub fn ensure_matches(&self, cfg: &TrainConfig) -> Result<()> {
        let ours = &self.config;
        let same = ours.code_len == cfg.code_len
            && ours.stride == cfg.stride
            && ours.frames == cfg.frames
            && ours.h1 == cfg.h1
            && ours.h2 == cfg.h2
            && ours.global_steps == cfg.global_steps
            && ours.activation == cfg.activation;
        if !same {
            return Err(Error::invalid(
                "Checkpoint::ensure_matches",
                format!(
                    "checkpoint was trained with code_len={} stride={} frames={} h1={} h2={} \
                     global_steps={} activation={}, refusing to resume with code_len={} \
                     stride={} frames={} h1={} h2={} global_steps={} activation={}",
                    ours.code_len,
                    ours.stride,
                    ours.frames,
                    ours.h1,
                    ours.h2,
                    ours.global_steps,
                    ours.activation,
                    cfg.code_len,
                    cfg.stride,
                    cfg.frames,
                    cfg.h1,
                    cfg.h2,
                    cfg.global_steps,
                    cfg.activation
                ),
            ));
        }
        Ok(())
    }
}

/// λ·recon + (1−λ)·neighbor.
pub fn total_loss<T: Scalar>(recon: T, neighbor: T, lambda: T) -> Result<T> {
    if lambda < T::zero() || lambda > T::one() {
        return Err(Error::invalid("total_loss", format!("lambda {lambda} not in [0, 1]")));
    }
    Ok(lambda * recon + (T::one() - lambda) * neighbor)
}

/// w ← w − lr·g for every parameter.
pub fn sgd_step<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &ModelParams<T>,
    lr: T,
) -> Result<()> {
    if params.param_count() != grads.param_count() {
        return Err(Error::shape(
            "sgd_step",
            format!("{} parameters vs {} gradients", params.param_count(), grads.param_count()),
        ));
    }
    params.add_scaled_params(-lr, grads);
    Ok(())
}

/// Scale gradients down to `max_norm` when they exceed it; returns the
/// norm before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut ModelParams<T>, max_norm: T) -> T {
    let norm = grads.global_norm();
    if norm > max_norm && norm > T::zero() {
        grads.scale_all(max_norm / norm);
    }
    norm
}

/// Train a fresh model. The seed pins everything: initialization, shuffle
/// order, and therefore the entire loss history.
pub fn train<T: Scalar>(
    ds: &Dataset<T>,
    graph: &NeighborGraph,
    cfg: &TrainConfig,
) -> Result<Checkpoint<T>> {
    cfg.validate()?;
    check_inputs(ds, graph, cfg)?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let params = ModelParams::init(&cfg.dims(ds.dim()), &mut rng)?;
    let mut ck = Checkpoint {
        config: cfg.clone(),
        input_dim: ds.dim(),
        params,
        epoch: 0,
        rng,
        history: Vec::new(),
    };
    run_epochs(ds, graph, &mut ck)?;
    Ok(ck)
}

/// Continue a checkpointed run until `config.epochs`; a no-op when the
/// budget is already spent. Epoch numbering and the shuffle stream carry
/// on seamlessly: train(6 epochs) ≡ train(3) → resume(through 6).
pub fn resume<T: Scalar>(
    ds: &Dataset<T>,
    graph: &NeighborGraph,
    mut ck: Checkpoint<T>,
) -> Result<Checkpoint<T>> {
    ck.config.validate()?;
    check_inputs(ds, graph, &ck.config)?;
    if ds.dim() != ck.input_dim {
        return Err(Error::shape(
            "resume",
            format!("dataset dim {} vs checkpoint dim {}", ds.dim(), ck.input_dim),
        ));
    }
    run_epochs(ds, graph, &mut ck)?;
    Ok(ck)
}

fn check_inputs<T: Scalar>(
    ds: &Dataset<T>,
    graph: &NeighborGraph,
    cfg: &TrainConfig,
) -> Result<()> {
    if graph.len() != ds.len() {
        return Err(Error::invalid(
            "train",
            format!("graph covers {} videos, dataset has {}", graph.len(), ds.len()),
        ));
    }
    if ds.frames() != cfg.frames {
        return Err(Error::shape(
            "train",
            format!("dataset has {} frames per video, config says {}", ds.frames(), cfg.frames),
        ));
    }
    if ds.len() < cfg.batch_size {
        return Err(Error::invalid(
            "train",
            format!("batch size {} exceeds dataset size {}", cfg.batch_size, ds.len()),
        ));
    }
    Ok(())
}

/// Learning rate for a 0-based epoch index: ×0.1 after each completed
/// third of the budget, floored at two decays.
fn lr_for_epoch(cfg: &TrainConfig, epoch: usize) -> f64 {
    let stage = ((epoch * 3) / cfg.epochs).min(2);
    cfg.learning_rate * LR_DECAY_FACTOR.powi(stage as i32)
}

/// Chunk a shuffled index order into mini-batches. A trailing batch of a
/// single video is folded into its predecessor — batch norm needs at
/// least two rows.
fn split_batches(order: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let orphan = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(orphan);
    }
    batches
}

fn pair_count(b: usize) -> usize {
    b * (b - 1) / 2
}

fn gradient_abort(e: Error, epoch: usize, batch_no: usize) -> Error {
    match e {
        Error::NonFinite { context } => Error::numeric(format!(
            "non-finite gradient ({context}) in epoch {}, batch {}",
            epoch + 1,
            batch_no + 1
        )),
        other => other,
    }
}

fn run_epochs<T: Scalar>(
    ds: &Dataset<T>,
    graph: &NeighborGraph,
    ck: &mut Checkpoint<T>,
) -> Result<()> {
    let cfg = ck.config.clone();
    let binarize = cfg.activation.binarize();
    let n = ds.len();
    let lambda = T::of(cfg.lambda);
    let neighbor_weight = T::of(1.0 - cfg.lambda);
    let eta = T::of(cfg.eta);

    for epoch in ck.epoch..cfg.epochs {
        let lr = T::of(lr_for_epoch(&cfg, epoch));
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ck.rng);
        let batches = split_batches(&order, cfg.batch_size);

        let mut recon_sum = T::zero();
        let mut pair_sum = T::zero();
        let mut pairs_total = 0usize;
        for (batch_no, batch) in batches.iter().enumerate() {
            let videos: Vec<&Matrix<T>> = batch.iter().map(|&i| ds.video(i)).collect();
            let out = run_batch(&ck.params, &videos, Mode::Train, binarize, true)?;
            let recon_mean = out.recon.mean();
            if !recon_mean.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite reconstruction loss in epoch {}, batch {}",
                    epoch + 1,
                    batch_no + 1
                )));
            }
            let (pair_mean, mut neighbor_grad) = batch_neighbor_loss(
                &out.encode.h,
                &out.encode.codes,
                |a, b| graph.sign(batch[a], batch[b]),
                eta,
            )?;
            if !pair_mean.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite neighborhood loss in epoch {}, batch {}",
                    epoch + 1,
                    batch_no + 1
                )));
            }

            // Reconstruction gradients carry λ/B (per-video mean), the
            // neighborhood gradient carries 1−λ; together they are the
            // gradient of total_loss for this batch.
            neighbor_grad.scale(neighbor_weight);
            let recon_scale = lambda / T::of(batch.len() as f64);
            let mut grads = model_backward(
                &ck.params,
                &videos,
                &out,
                recon_scale,
                Some(&neighbor_grad),
                binarize,
            )
            .map_err(|e| gradient_abort(e, epoch, batch_no))?;
            clip_global_norm(&mut grads, T::of(GRAD_CLIP_NORM));
            sgd_step(&mut ck.params, &grads, lr)?;
            // Fold the advanced normalization statistics in only after the
            // optimizer step, so the update itself sees a consistent model.
            ck.params.encoder.layer2.commit_running_stats(&out.encode.bn_updates)?;

            recon_sum += out.recon.total();
            pair_sum += pair_mean * T::of(pair_count(batch.len()) as f64);
            pairs_total += pair_count(batch.len());
        }

        let recon_epoch = (recon_sum / T::of(n as f64)).as_f64();
        let neighbor_epoch = (pair_sum / T::of(pairs_total as f64)).as_f64();
        let total = total_loss(recon_epoch, neighbor_epoch, cfg.lambda)?;
        ck.history.push(LossRecord {
            epoch: epoch + 1,
            recon: recon_epoch,
            neighbor: neighbor_epoch,
            total,
        });
        ck.epoch = epoch + 1;
    }
    Ok(())
}
