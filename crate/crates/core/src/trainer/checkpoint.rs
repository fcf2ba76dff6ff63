//! Checkpoint persistence: magic "SSVH-CKPT", a version integer, the full
//! training config, the rng position, the loss history, every learnable
//! parameter in fixed visit order, and the batch-norm running statistics.
//! A load rebuilds the exact training state — resuming from disk is
//! bit-equivalent to never having stopped.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::autoencoder::ModelParams;
use crate::error::{Error, Result};
use crate::io;
use crate::scalar::Scalar;

use super::{Activation, Checkpoint, LossRecord, TrainConfig};

const CKPT_MAGIC: &[u8; 9] = b"SSVH-CKPT";
const CKPT_VERSION: u32 = 1;

fn activation_tag(a: Activation) -> u8 {
    match a {
        Activation::HardSgnSte => 0,
        Activation::TanhRelax => 1,
    }
}

fn activation_from_tag(tag: u8, path: &Path) -> Result<Activation> {
    match tag {
        0 => Ok(Activation::HardSgnSte),
        1 => Ok(Activation::TanhRelax),
        other => Err(Error::format(path, format!("unknown activation tag {other}"))),
    }
}

pub fn save_checkpoint<T: Scalar>(ck: &Checkpoint<T>, path: &Path) -> Result<()> {
    let mut w = io::create_writer(path)?;
    io::write_magic(&mut w, path, CKPT_MAGIC)?;
    io::write_u32(&mut w, path, CKPT_VERSION)?;

    let cfg = &ck.config;
    for v in [cfg.code_len, cfg.stride, cfg.frames, cfg.h1, cfg.h2, cfg.global_steps] {
        io::write_u64(&mut w, path, v as u64)?;
    }
    for v in [cfg.lambda, cfg.eta, cfg.learning_rate] {
        io::write_f64(&mut w, path, v)?;
    }
    for v in [cfg.batch_size as u64, cfg.epochs as u64, cfg.seed] {
        io::write_u64(&mut w, path, v)?;
    }
    io::write_u8(&mut w, path, activation_tag(cfg.activation))?;
    io::write_u64(&mut w, path, cfg.k1 as u64)?;
    io::write_u64(&mut w, path, cfg.k2 as u64)?;

    io::write_u64(&mut w, path, ck.input_dim as u64)?;
    io::write_u64(&mut w, path, ck.epoch as u64)?;

    w.write_all(&ck.rng.get_seed()).map_err(|e| Error::io(path, e))?;
    let pos: u128 = ck.rng.get_word_pos();
    io::write_u64(&mut w, path, pos as u64)?;
    io::write_u64(&mut w, path, (pos >> 64) as u64)?;

    io::write_u64(&mut w, path, ck.history.len() as u64)?;
    for rec in &ck.history {
        io::write_u64(&mut w, path, rec.epoch as u64)?;
        io::write_f64(&mut w, path, rec.recon)?;
        io::write_f64(&mut w, path, rec.neighbor)?;
        io::write_f64(&mut w, path, rec.total)?;
    }

    let flat = ck.params.flatten();
    io::write_u64(&mut w, path, flat.len() as u64)?;
    for v in flat {
        io::write_f64(&mut w, path, v.as_f64())?;
    }

    let bn = &ck.params.encoder.layer2.bn;
    io::write_u64(&mut w, path, bn.len() as u64)?;
    io::write_u64(&mut w, path, bn.first().map_or(0, |s| s.running_mean.len()) as u64)?;
    for state in bn {
        for v in state.running_mean.as_slice() {
            io::write_f64(&mut w, path, v.as_f64())?;
        }
        for v in state.running_var.as_slice() {
            io::write_f64(&mut w, path, v.as_f64())?;
        }
    }
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let mut r = io::open_reader(path)?;
    io::check_magic(&mut r, path, CKPT_MAGIC)?;
    let version = io::read_u32(&mut r, path)?;
    if version != CKPT_VERSION {
        return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
    }
    load_body(&mut r, path).map_err(|e| io::truncation_as_format(e, path, "checkpoint body"))
}

fn load_body<T: Scalar>(r: &mut impl Read, path: &Path) -> Result<Checkpoint<T>> {
    let mut dims_raw = [0usize; 6];
    for slot in &mut dims_raw {
        *slot = io::checked_len(io::read_u64(r, path)?, "config field", path)?;
    }
    let [code_len, stride, frames, h1, h2, global_steps] = dims_raw;
    let lambda = io::read_f64(r, path)?;
    let eta = io::read_f64(r, path)?;
    let learning_rate = io::read_f64(r, path)?;
    let batch_size = io::checked_len(io::read_u64(r, path)?, "batch size", path)?;
    let epochs = io::checked_len(io::read_u64(r, path)?, "epoch budget", path)?;
    let seed = io::read_u64(r, path)?;
    let activation = activation_from_tag(io::read_u8(r, path)?, path)?;
    let k1 = io::checked_len(io::read_u64(r, path)?, "k1", path)?;
    let k2 = io::checked_len(io::read_u64(r, path)?, "k2", path)?;
    let config = TrainConfig {
        code_len,
        stride,
        frames,
        h1,
        h2,
        global_steps,
        lambda,
        eta,
        learning_rate,
        batch_size,
        epochs,
        seed,
        activation,
        k1,
        k2,
    };
    config.validate().map_err(|e| Error::format(path, format!("stored config invalid: {e}")))?;

    let input_dim = io::checked_len(io::read_u64(r, path)?, "input dim", path)?;
    let epoch = io::checked_len(io::read_u64(r, path)?, "completed epochs", path)?;

    let mut seed_bytes = [0u8; 32];
    r.read_exact(&mut seed_bytes).map_err(|e| Error::io(path, e))?;
    let pos_lo = io::read_u64(r, path)?;
    let pos_hi = io::read_u64(r, path)?;
    let mut rng = ChaCha20Rng::from_seed(seed_bytes);
    rng.set_word_pos(u128::from(pos_lo) | (u128::from(pos_hi) << 64));

    let n_records = io::checked_len(io::read_u64(r, path)?, "history length", path)?;
    let mut history = Vec::with_capacity(n_records.min(1 << 20));
    for _ in 0..n_records {
        let epoch = io::checked_len(io::read_u64(r, path)?, "history epoch", path)?;
        let recon = io::read_f64(r, path)?;
        let neighbor = io::read_f64(r, path)?;
        let total = io::read_f64(r, path)?;
        history.push(LossRecord { epoch, recon, neighbor, total });
    }

    let dims =
        crate::autoencoder::ModelDims { input_dim, frames, stride, h1, h2, code_len, global_steps };
    let mut params = ModelParams::<T>::init(&dims, &mut ChaCha20Rng::seed_from_u64(0))
        .map_err(|e| Error::format(path, format!("stored shape invalid: {e}")))?;
    let n_params = io::checked_len(io::read_u64(r, path)?, "parameter count", path)?;
    if n_params != params.param_count() {
        return Err(Error::format(
            path,
            format!("{} stored parameters, model wants {}", n_params, params.param_count()),
        ));
    }
    let mut flat = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        flat.push(T::of(io::read_f64(r, path)?));
    }
    params
        .unflatten_into(&flat)
        .map_err(|e| Error::format(path, format!("parameter blob rejected: {e}")))?;

    let n_states = io::checked_len(io::read_u64(r, path)?, "norm state count", path)?;
    let width = io::checked_len(io::read_u64(r, path)?, "norm state width", path)?;
    if n_states != params.encoder.layer2.bn.len() || width != code_len {
        return Err(Error::format(
            path,
            format!(
                "{n_states} norm states of width {width}, model wants {} of width {code_len}",
                params.encoder.layer2.bn.len()
            ),
        ));
    }
    for state in &mut params.encoder.layer2.bn {
        for v in state.running_mean.as_mut_slice() {
            *v = T::of(io::read_f64(r, path)?);
        }
        for v in state.running_var.as_mut_slice() {
            *v = T::of(io::read_f64(r, path)?);
        }
    }
    if !params.all_finite() {
        return Err(Error::format(path, "non-finite parameter in checkpoint".to_string()));
    }

    let mut probe = [0u8; 1];
    if r.read(&mut probe).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::format(path, "trailing bytes after checkpoint".to_string()));
    }
    Ok(Checkpoint { config, input_dim, params, epoch, rng, history })
}
