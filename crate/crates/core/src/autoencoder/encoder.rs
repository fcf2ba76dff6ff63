//! Two-layer hierarchical encoder.
//!
//! Layer 1 is a plain LSTM that walks every frame. Layer 2 is the binary
//! cell: it consumes only every l-th layer-1 output, so a sequence of M
//! frames costs M + M/l recurrent steps instead of 2M. Both layers start
//! from fixed initial states: zeros for layer 1, and out₀ = −1, c₀ = 0 for
//! the binary cell.

use crate::error::{Error, Result};
use crate::numerics::{BatchNormState, Matrix, Mode};
use crate::recurrent::{
    blstm_step, blstm_step_backward, lstm_step, lstm_step_backward, Binarize, BlstmTape, LstmTape,
};
use crate::scalar::Scalar;

use super::params::EncoderParams;

/// Everything recorded during a batched encode that the backward pass needs.
#[derive(Debug, Clone)]
pub struct EncoderTape<T> {
    pub l1: Vec<LstmTape<T>>,
    pub l2: Vec<BlstmTape<T>>,
}

/// Result of encoding a batch of sequences.
#[derive(Debug, Clone)]
pub struct EncodeBatch<T> {
    /// Final pre-binarization activations, one row per video (B×L).
    pub h: Matrix<T>,
    /// Final emitted signal (hard: ±1; relaxed modes: clamp/tanh of h).
    pub out: Matrix<T>,
    /// Hash codes sgn(h) in {−1,+1}, independent of the relaxation in use.
    pub codes: Matrix<T>,
    /// Advanced running statistics per binary-cell step (train mode);
    /// commit with [`crate::recurrent::BlstmParams::commit_running_stats`].
    pub bn_updates: Vec<BatchNormState<T>>,
    /// Recurrent steps the first layer executed (equals M).
    pub layer1_steps: usize,
    /// Recurrent steps the binary layer executed (equals M/l).
    pub layer2_steps: usize,
    pub tape: Option<EncoderTape<T>>,
}

fn check_videos<T: Scalar>(p: &EncoderParams<T>, videos: &[&Matrix<T>]) -> Result<(usize, usize)> {
    if videos.is_empty() {
        return Err(Error::invalid("encode_batch", "empty batch"));
    }
    let m = p.frames();
    let d = p.layer1.input_dim();
    for (idx, v) in videos.iter().enumerate() {
        if v.rows() != m || v.cols() != d {
            return Err(Error::shape(
                "encode_batch",
                format!(
                    "video {idx} is {}x{}, encoder expects {m} frames of width {d}",
                    v.rows(),
                    v.cols()
                ),
            ));
        }
        if !v.all_finite() {
            return Err(Error::non_finite(format!("encode_batch: video {idx} input")));
        }
    }
    Ok((m, d))
}

/// Encode a batch of equally shaped M×D sequences into one code per row.
pub fn encode_batch<T: Scalar>(
    p: &EncoderParams<T>,
    videos: &[&Matrix<T>],
    mode: Mode,
    binarize: Binarize,
    want_tape: bool,
) -> Result<EncodeBatch<T>> {
    let (m, d) = check_videos(p, videos)?;
    let b = videos.len();
    let h1 = p.layer1.hidden_dim();
    let code_len = p.layer2.code_len();
    let steps2 = p.layer2.steps();
    let keep_tape = want_tape && mode == Mode::Train;

    // Layer 1: one batched step per frame, from zero initial state.
    let mut l1_h: Vec<Matrix<T>> = Vec::with_capacity(m);
    let mut l1_tapes: Vec<LstmTape<T>> = Vec::new();
    let mut h_prev = Matrix::zeros(b, h1);
    let mut c_prev = Matrix::zeros(b, h1);
    for t in 0..m {
        let x_t = Matrix::from_fn(b, d, |r, c| videos[r][(t, c)]);
        let step = lstm_step(&p.layer1, &x_t, &h_prev, &c_prev, keep_tape)?;
        h_prev = step.h;
        c_prev = step.c;
        l1_h.push(h_prev.clone());
        if let Some(tape) = step.tape {
            l1_tapes.push(tape);
        }
    }

    // Layer 2: binary cell over every l-th layer-1 output.
    let mut out_prev = Matrix::filled(b, code_len, -T::one());
    let mut cell_prev = Matrix::zeros(b, code_len);
    let mut h_final = Matrix::zeros(b, code_len);
    let mut l2_tapes: Vec<BlstmTape<T>> = Vec::new();
    let mut bn_updates: Vec<BatchNormState<T>> = Vec::with_capacity(steps2);
    for i in 0..steps2 {
        let z = &l1_h[p.stride * (i + 1) - 1];
        let step = blstm_step(&p.layer2, i, z, &out_prev, &cell_prev, mode, binarize, keep_tape)?;
        out_prev = step.out;
        cell_prev = step.c;
        h_final = step.h;
        bn_updates.push(step.bn_state);
        if let Some(tape) = step.tape {
            l2_tapes.push(tape);
        }
    }

    if !h_final.all_finite() {
        return Err(Error::non_finite("encode_batch: final activations"));
    }
    let codes = h_final.map(crate::recurrent::sgn);
    let tape = keep_tape.then_some(EncoderTape { l1: l1_tapes, l2: l2_tapes });
    Ok(EncodeBatch {
        h: h_final,
        out: out_prev,
        codes,
        bn_updates,
        layer1_steps: m,
        layer2_steps: steps2,
        tape,
    })
}

/// Encode a single sequence with frozen statistics — the inference path.
pub fn encode_one<T: Scalar>(
    p: &EncoderParams<T>,
    video: &Matrix<T>,
    binarize: Binarize,
) -> Result<EncodeBatch<T>> {
    encode_batch(p, &[video], Mode::Infer, binarize, false)
}

/// Backpropagate through a taped encode.
///
/// `grad_h` is the upstream gradient on the final pre-binarization
/// activations; `grad_out` is the raw gradient on the final emission (the
/// final step applies its own straight-through gate). Parameter gradients
/// accumulate into `acc`; gradients w.r.t. the input frames are discarded.
pub fn encoder_backward<T: Scalar>(
    p: &EncoderParams<T>,
    tape: &EncoderTape<T>,
    grad_h: &Matrix<T>,
    grad_out: &Matrix<T>,
    binarize: Binarize,
    acc: &mut EncoderParams<T>,
) -> Result<()> {
    let m = p.frames();
    let steps2 = p.layer2.steps();
    if tape.l1.len() != m || tape.l2.len() != steps2 {
        return Err(Error::invalid(
            "encoder_backward",
            format!(
                "tape holds {}+{} steps, encoder ran {m}+{steps2}",
                tape.l1.len(),
                tape.l2.len()
            ),
        ));
    }
    let b = grad_h.rows();
    let zero_code = Matrix::zeros(b, p.layer2.code_len());

    // Binary layer, newest step first. grad_z lands on the layer-1 outputs
    // the cell actually read.
    let mut l1_h_grads: Vec<Matrix<T>> = vec![Matrix::zeros(b, p.layer1.hidden_dim()); m];
    let mut grad_out_next = grad_out.clone();
    let mut grad_c_next = zero_code.clone();
    for i in (0..steps2).rev() {
        let gh = if i + 1 == steps2 { grad_h } else { &zero_code };
        let g = blstm_step_backward(
            &p.layer2,
            &tape.l2[i],
            gh,
            &grad_out_next,
            &grad_c_next,
            binarize,
            &mut acc.layer2,
        )?;
        grad_out_next = g.out_prev;
        grad_c_next = g.c_prev;
        l1_h_grads[p.stride * (i + 1) - 1].add_assign_mat(&g.z);
    }
    // out₀ and c₀ are fixed constants; their gradients stop here.

    // First layer, newest frame first.
    let mut grad_h_next = Matrix::zeros(b, p.layer1.hidden_dim());
    let mut grad_c1_next = Matrix::zeros(b, p.layer1.hidden_dim());
    for t in (0..m).rev() {
        grad_h_next.add_assign_mat(&l1_h_grads[t]);
        let g = lstm_step_backward(
            &p.layer1,
            &tape.l1[t],
            &grad_h_next,
            &grad_c1_next,
            &mut acc.layer1,
        )?;
        grad_h_next = g.h_prev;
        grad_c1_next = g.c_prev;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recurrent::{BlstmParams, LstmParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn tiny_encoder(seed: u64) -> EncoderParams<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        EncoderParams {
            layer1: LstmParams::init(3, 4, &mut rng),
            layer2: BlstmParams::init(4, 5, 2, &mut rng),
            stride: 2,
        }
    }

    fn video(seed: u64, m: usize, d: usize) -> Matrix<f64> {
        use rand::Rng;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Matrix::from_fn(m, d, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn step_counts_follow_the_stride() {
        let p = tiny_encoder(1);
        let (a, b) = (video(10, 4, 3), video(11, 4, 3));
        let enc = encode_batch(&p, &[&a, &b], Mode::Train, Binarize::Hard, false).unwrap();
        assert_eq!(enc.layer1_steps, 4);
        assert_eq!(enc.layer2_steps, 2);
        assert_eq!(enc.h.rows(), 2);
        assert_eq!(enc.h.cols(), 5);
    }

    #[test]
    fn hard_codes_are_signs_of_h() {
        let p = tiny_encoder(2);
        let (a, b) = (video(12, 4, 3), video(13, 4, 3));
        let enc = encode_batch(&p, &[&a, &b], Mode::Train, Binarize::Hard, false).unwrap();
        for r in 0..2 {
            for c in 0..5 {
                let code = enc.codes[(r, c)];
                assert!(code == 1.0 || code == -1.0);
                assert_eq!(code, if enc.h[(r, c)] >= 0.0 { 1.0 } else { -1.0 });
                assert_eq!(enc.out[(r, c)], code);
            }
        }
    }

    #[test]
    fn relaxed_codes_still_binary() {
        let p = tiny_encoder(3);
        let (a, b) = (video(14, 4, 3), video(15, 4, 3));
        for bin in [Binarize::Clip, Binarize::Tanh] {
            let enc = encode_batch(&p, &[&a, &b], Mode::Train, bin, false).unwrap();
            assert!(enc.codes.data().iter().all(|&v| v == 1.0 || v == -1.0));
        }
    }

    #[test]
    fn batch_is_processed_jointly_not_per_video() {
        // Train-mode normalization couples batch members: encoding a video
        // alongside different companions changes its activations.
        let p = tiny_encoder(4);
        let (a, b, c) = (video(16, 4, 3), video(17, 4, 3), video(18, 4, 3));
        let ab = encode_batch(&p, &[&a, &b], Mode::Train, Binarize::Clip, false).unwrap();
        let ac = encode_batch(&p, &[&a, &c], Mode::Train, Binarize::Clip, false).unwrap();
        let row_ab: Vec<f64> = (0..5).map(|j| ab.h[(0, j)]).collect();
        let row_ac: Vec<f64> = (0..5).map(|j| ac.h[(0, j)]).collect();
        assert_ne!(row_ab, row_ac);
    }

    #[test]
    fn inference_ignores_batch_companions() {
        let mut p = tiny_encoder(5);
        // Give the running statistics a non-trivial value first.
        let (a, b) = (video(19, 4, 3), video(20, 4, 3));
        let warm = encode_batch(&p, &[&a, &b], Mode::Train, Binarize::Hard, false).unwrap();
        p.layer2.commit_running_stats(&warm.bn_updates).unwrap();

        let solo = encode_one(&p, &a, Binarize::Hard).unwrap();
        let paired = encode_batch(&p, &[&a, &b], Mode::Infer, Binarize::Hard, false).unwrap();
        for j in 0..5 {
            assert_eq!(solo.h[(0, j)], paired.h[(0, j)]);
        }
    }

    #[test]
    fn wrong_frame_count_rejected() {
        let p = tiny_encoder(6);
        let bad = video(21, 6, 3);
        let err = encode_batch(&p, &[&bad], Mode::Infer, Binarize::Hard, false).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }

    #[test]
    fn non_finite_input_rejected() {
        let p = tiny_encoder(7);
        let mut bad = video(22, 4, 3);
        bad[(1, 1)] = f64::NAN;
        let err = encode_batch(&p, &[&bad], Mode::Infer, Binarize::Hard, false).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn train_mode_records_tapes_and_stat_updates() {
        let p = tiny_encoder(8);
        let (a, b) = (video(23, 4, 3), video(24, 4, 3));
        let enc = encode_batch(&p, &[&a, &b], Mode::Train, Binarize::Clip, true).unwrap();
        let tape = enc.tape.expect("train mode with want_tape should record");
        assert_eq!(tape.l1.len(), 4);
        assert_eq!(tape.l2.len(), 2);
        assert_eq!(enc.bn_updates.len(), 2);
        // Statistics moved away from the 0.9·old + 0.1·batch fixed point.
        assert_ne!(
            enc.bn_updates[0].running_mean.as_slice(),
            p.layer2.bn[0].running_mean.as_slice()
        );
    }
}
