//! Whole-model forward and backward over a mini-batch: encode, run all
//! three decoders off the emitted code, score the reconstructions, and
//! push gradients back through everything in one call.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Mode};
use crate::recurrent::Binarize;
use crate::scalar::Scalar;

use super::decoder::{
    decode_global, decode_global_backward, decode_sequence, decode_sequence_backward, DecodeOut,
    GlobalOut,
};
use super::encoder::{encode_batch, encoder_backward, EncodeBatch};
use super::loss::{batch_recon_values, BatchRecon};
use super::params::ModelParams;

/// Everything one batched forward pass produces.
#[derive(Debug, Clone)]
pub struct BatchOutput<T> {
    pub encode: EncodeBatch<T>,
    pub forward: DecodeOut<T>,
    pub backward: DecodeOut<T>,
    pub global: GlobalOut<T>,
    pub recon: BatchRecon<T>,
}

/// Encode a batch, reconstruct it three ways, and score the result.
pub fn run_batch<T: Scalar>(
    p: &ModelParams<T>,
    videos: &[&Matrix<T>],
    mode: Mode,
    binarize: Binarize,
    want_tape: bool,
) -> Result<BatchOutput<T>> {
    let keep = want_tape && mode == Mode::Train;
    let dims = p.dims();
    let encode = encode_batch(&p.encoder, videos, mode, binarize, keep)?;
    let forward =
        decode_sequence(&p.decoder.forward, &encode.out, dims.frames, dims.stride, false, keep)?;
    let backward =
        decode_sequence(&p.decoder.backward, &encode.out, dims.frames, dims.stride, true, keep)?;
    let global = decode_global(&p.decoder.global, &encode.out, p.decoder.global_steps, keep)?;
    let recon = batch_recon_values(videos, &forward.frames, &backward.frames, &global.recon)?;
    Ok(BatchOutput { encode, forward, backward, global, recon })
}

/// Backpropagate `recon_scale · Σ_videos recon_total` plus an optional
/// extra gradient applied directly to the final real-valued activations
/// (the hook the neighborhood objective uses). Returns a parameter-shaped
/// gradient container.
pub fn model_backward<T: Scalar>(
    p: &ModelParams<T>,
    videos: &[&Matrix<T>],
    out: &BatchOutput<T>,
    recon_scale: T,
    grad_h_extra: Option<&Matrix<T>>,
    binarize: Binarize,
) -> Result<ModelParams<T>> {
    let dims = p.dims();
    let b = videos.len();
    let m = dims.frames;
    let d = dims.input_dim;
    let two_scale = T::of(2.0) * recon_scale;
    let mut grads = p.zeros_like();

    let enc_tape =
        out.encode.tape.as_ref().ok_or_else(|| {
            Error::invalid("model_backward", "forward pass was run without tapes")
        })?;
    let fwd_tape = out.forward.tape.as_ref().unwrap();
    let bwd_tape = out.backward.tape.as_ref().unwrap();
    let glob_tape = out.global.tape.as_ref().unwrap();

    // d loss / d reconstruction = 2·scale·(rec − target), time-major.
    let mut grad_fwd: Vec<Matrix<T>> = Vec::with_capacity(m);
    let mut grad_bwd: Vec<Matrix<T>> = Vec::with_capacity(m);
    for t in 0..m {
        let target = Matrix::from_fn(b, d, |r, c| videos[r][(t, c)]);
        let mut gf = out.forward.frames[t].sub(&target);
        gf.scale(two_scale);
        grad_fwd.push(gf);
        let mut gb = out.backward.frames[t].sub(&target);
        gb.scale(two_scale);
        grad_bwd.push(gb);
    }
    let mean_targets = Matrix::from_fn(b, d, |r, c| {
        let mut acc = T::zero();
        for t in 0..m {
            acc += videos[r][(t, c)];
        }
        acc / T::of(m as f64)
    });
    let mut grad_glob = out.global.recon.sub(&mean_targets);
    grad_glob.scale(two_scale);

    // Decoders feed their seed gradients back onto the emitted code.
    let mut grad_code = decode_sequence_backward(
        &p.decoder.forward,
        fwd_tape,
        &grad_fwd,
        dims.stride,
        false,
        &mut grads.decoder.forward,
    )?;
    grad_code.add_assign_mat(&decode_sequence_backward(
        &p.decoder.backward,
        bwd_tape,
        &grad_bwd,
        dims.stride,
        true,
        &mut grads.decoder.backward,
    )?);
    grad_code.add_assign_mat(&decode_global_backward(
        &p.decoder.global,
        glob_tape,
        &grad_glob,
        &mut grads.decoder.global,
    )?);

    let zero_h = Matrix::zeros(b, dims.code_len);
    let grad_h = grad_h_extra.unwrap_or(&zero_h);
    encoder_backward(&p.encoder, enc_tape, grad_h, &grad_code, binarize, &mut grads.encoder)?;

    if !grads.all_finite() {
        return Err(Error::non_finite("model_backward: gradients"));
    }
    Ok(grads)
}
