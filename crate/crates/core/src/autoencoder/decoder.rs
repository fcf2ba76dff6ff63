//! Reconstruction decoders.
//!
//! Each decoder is the same two-layer stack: a recurrent-only first layer
//! whose hidden state is *seeded with the code* (it receives no external
//! input, so its input width is zero), a second layer that runs one step
//! per output frame, and an affine head back to feature space. The first
//! layer runs once per stride window — M/l steps for M frames — and its
//! i-th output is injected into the second layer exactly when a new window
//! begins; between injections the second layer runs on a zero input.
//!
//! The sequence decoder comes in two directions. Forward reconstructs
//! frames 1..M in order. The time-reversed decoder runs the identical
//! recurrence but its τ-th processing step is responsible for frame
//! M+1−τ, so the first injection carries the code toward the *last* frame.
//! The global decoder ignores time entirely: it runs a fixed number of
//! steps and projects only the final hidden state, targeting the mean
//! frame.

use crate::error::{Error, Result};
use crate::numerics::{affine, Matrix};
use crate::recurrent::{lstm_step, lstm_step_backward, LstmTape};
use crate::scalar::Scalar;

use super::params::DecoderStack;

/// Forward intermediates for one sequence decode.
#[derive(Debug, Clone)]
pub struct DecodeTape<T> {
    pub l1: Vec<LstmTape<T>>,
    pub l2: Vec<LstmTape<T>>,
    /// Second-layer hidden states in processing order — the head inputs.
    pub l2_h: Vec<Matrix<T>>,
}

/// Result of one sequence decode over a batch.
#[derive(Debug, Clone)]
pub struct DecodeOut<T> {
    /// `frames[t]` is the B×D reconstruction of frame t+1.
    pub frames: Vec<Matrix<T>>,
    /// 1-indexed frame numbers that received a first-layer injection, in
    /// processing order.
    pub injected_frames: Vec<usize>,
    /// Steps the recurrent-only first layer executed (M/l).
    pub layer1_steps: usize,
    /// Steps the second layer executed (M).
    pub layer2_steps: usize,
    pub tape: Option<DecodeTape<T>>,
}

fn check_stack<T: Scalar>(
    op: &'static str,
    stack: &DecoderStack<T>,
    code: &Matrix<T>,
) -> Result<()> {
    let l = stack.l1.hidden_dim();
    if stack.l1.input_dim() != 0 {
        return Err(Error::invalid(
            op,
            "first decoder layer must be recurrent-only (input width 0)",
        ));
    }
    if code.cols() != l {
        return Err(Error::shape(
            op,
            format!("code width {} does not match decoder seed width {l}", code.cols()),
        ));
    }
    if stack.l2.input_dim() != l {
        return Err(Error::shape(
            op,
            format!(
                "second layer expects input width {}, first layer emits {l}",
                stack.l2.input_dim()
            ),
        ));
    }
    if stack.head_w.rows() != stack.l2.hidden_dim() || stack.head_w.cols() != stack.head_b.len() {
        return Err(Error::shape(op, "projection head does not match second layer"));
    }
    Ok(())
}

/// Decode a batch of codes into M frames, forward or time-reversed.
pub fn decode_sequence<T: Scalar>(
    stack: &DecoderStack<T>,
    code: &Matrix<T>,
    m: usize,
    stride: usize,
    reverse: bool,
    want_tape: bool,
) -> Result<DecodeOut<T>> {
    let op = if reverse { "decode_backward" } else { "decode_forward" };
    check_stack(op, stack, code)?;
    if m == 0 || stride == 0 || !m.is_multiple_of(stride) {
        return Err(Error::invalid(
            op,
            format!("frame count {m} must be a positive multiple of stride {stride}"),
        ));
    }
    let b = code.rows();
    let code_len = stack.l1.hidden_dim();
    let h2 = stack.l2.hidden_dim();
    let d = stack.head_b.len();
    let steps1 = m / stride;

    // First layer: seeded hidden state, no external input.
    let empty = Matrix::zeros(b, 0);
    let mut seed_h = code.clone();
    let mut seed_c = Matrix::zeros(b, code_len);
    let mut windows: Vec<Matrix<T>> = Vec::with_capacity(steps1);
    let mut l1_tapes: Vec<LstmTape<T>> = Vec::new();
    for _ in 0..steps1 {
        let step = lstm_step(&stack.l1, &empty, &seed_h, &seed_c, want_tape)?;
        seed_h = step.h;
        seed_c = step.c;
        windows.push(seed_h.clone());
        if let Some(tape) = step.tape {
            l1_tapes.push(tape);
        }
    }

    // Second layer: one step per frame, injecting a window output whenever
    // a new stride window starts.
    let zero_in = Matrix::zeros(b, code_len);
    let mut h = Matrix::zeros(b, h2);
    let mut c = Matrix::zeros(b, h2);
    let mut frames = vec![Matrix::zeros(b, d); m];
    let mut injected_frames = Vec::with_capacity(steps1);
    let mut l2_tapes: Vec<LstmTape<T>> = Vec::new();
    let mut l2_h: Vec<Matrix<T>> = Vec::new();
    for tau in 1..=m {
        let inject = (tau - 1) % stride == 0;
        let x = if inject { &windows[(tau - 1) / stride] } else { &zero_in };
        let step = lstm_step(&stack.l2, x, &h, &c, want_tape)?;
        h = step.h;
        c = step.c;
        let frame_no = if reverse { m + 1 - tau } else { tau };
        if inject {
            injected_frames.push(frame_no);
        }
        frames[frame_no - 1] = affine(&h, &stack.head_w, &stack.head_b)?;
        if want_tape {
            l2_h.push(h.clone());
        }
        if let Some(tape) = step.tape {
            l2_tapes.push(tape);
        }
    }

    let tape = want_tape.then_some(DecodeTape { l1: l1_tapes, l2: l2_tapes, l2_h });
    Ok(DecodeOut { frames, injected_frames, layer1_steps: steps1, layer2_steps: m, tape })
}

/// Backpropagate through a taped sequence decode; returns the gradient on
/// the code seed. `grad_frames[t]` is the upstream gradient on the
/// reconstruction of frame t+1.
pub fn decode_sequence_backward<T: Scalar>(
    stack: &DecoderStack<T>,
    tape: &DecodeTape<T>,
    grad_frames: &[Matrix<T>],
    stride: usize,
    reverse: bool,
    acc: &mut DecoderStack<T>,
) -> Result<Matrix<T>> {
    let m = tape.l2.len();
    if grad_frames.len() != m || tape.l2_h.len() != m {
        return Err(Error::invalid(
            "decode_sequence_backward",
            format!("{} frame gradients against a {m}-step tape", grad_frames.len()),
        ));
    }
    let steps1 = tape.l1.len();
    let b = grad_frames[0].rows();
    let code_len = stack.l1.hidden_dim();
    let h2 = stack.l2.hidden_dim();

    // Second layer, newest processing step first. The head contributes a
    // hidden-state gradient at every step; injected steps pass their input
    // gradient back to the window that fed them.
    let mut window_grads: Vec<Matrix<T>> = vec![Matrix::zeros(b, code_len); steps1];
    let mut grad_h = Matrix::zeros(b, h2);
    let mut grad_c = Matrix::zeros(b, h2);
    for tau in (1..=m).rev() {
        let frame_no = if reverse { m + 1 - tau } else { tau };
        let grad_v = &grad_frames[frame_no - 1];
        acc.head_w.add_matmul_at_b(&tape.l2_h[tau - 1], grad_v);
        acc.head_b.add_scaled(T::one(), &grad_v.col_sum());
        grad_h.add_matmul_a_bt(grad_v, &stack.head_w);

        let g = lstm_step_backward(&stack.l2, &tape.l2[tau - 1], &grad_h, &grad_c, &mut acc.l2)?;
        if (tau - 1) % stride == 0 {
            window_grads[(tau - 1) / stride].add_assign_mat(&g.x);
        }
        grad_h = g.h_prev;
        grad_c = g.c_prev;
    }

    // First layer, newest window first; the gradient on its initial hidden
    // state is the gradient on the code.
    let mut grad_seed_h = Matrix::zeros(b, code_len);
    let mut grad_seed_c = Matrix::zeros(b, code_len);
    for i in (0..steps1).rev() {
        grad_seed_h.add_assign_mat(&window_grads[i]);
        let g =
            lstm_step_backward(&stack.l1, &tape.l1[i], &grad_seed_h, &grad_seed_c, &mut acc.l1)?;
        grad_seed_h = g.h_prev;
        grad_seed_c = g.c_prev;
    }
    Ok(grad_seed_h)
}

/// Forward intermediates for one global decode.
#[derive(Debug, Clone)]
pub struct GlobalTape<T> {
    pub l1: Vec<LstmTape<T>>,
    pub l2: Vec<LstmTape<T>>,
    /// Final second-layer hidden state — the only head input.
    pub l2_h_final: Matrix<T>,
}

/// Result of one global decode over a batch.
#[derive(Debug, Clone)]
pub struct GlobalOut<T> {
    /// B×D reconstruction of the mean frame.
    pub recon: Matrix<T>,
    pub layer1_steps: usize,
    pub layer2_steps: usize,
    pub tape: Option<GlobalTape<T>>,
}

/// Decode a batch of codes into one mean-frame reconstruction each.
pub fn decode_global<T: Scalar>(
    stack: &DecoderStack<T>,
    code: &Matrix<T>,
    steps: usize,
    want_tape: bool,
) -> Result<GlobalOut<T>> {
    check_stack("decode_global", stack, code)?;
    if steps == 0 {
        return Err(Error::invalid("decode_global", "step count must be positive"));
    }
    let b = code.rows();
    let code_len = stack.l1.hidden_dim();
    let h2 = stack.l2.hidden_dim();

    let empty = Matrix::zeros(b, 0);
    let mut seed_h = code.clone();
    let mut seed_c = Matrix::zeros(b, code_len);
    let mut h = Matrix::zeros(b, h2);
    let mut c = Matrix::zeros(b, h2);
    let mut l1_tapes: Vec<LstmTape<T>> = Vec::new();
    let mut l2_tapes: Vec<LstmTape<T>> = Vec::new();
    for _ in 0..steps {
        let s1 = lstm_step(&stack.l1, &empty, &seed_h, &seed_c, want_tape)?;
        seed_h = s1.h;
        seed_c = s1.c;
        let s2 = lstm_step(&stack.l2, &seed_h, &h, &c, want_tape)?;
        h = s2.h;
        c = s2.c;
        if let Some(t) = s1.tape {
            l1_tapes.push(t);
        }
        if let Some(t) = s2.tape {
            l2_tapes.push(t);
        }
    }
    let recon = affine(&h, &stack.head_w, &stack.head_b)?;
    let tape = want_tape.then_some(GlobalTape { l1: l1_tapes, l2: l2_tapes, l2_h_final: h });
    Ok(GlobalOut { recon, layer1_steps: steps, layer2_steps: steps, tape })
}

/// Backpropagate through a taped global decode; returns the gradient on
/// the code seed.
pub fn decode_global_backward<T: Scalar>(
    stack: &DecoderStack<T>,
    tape: &GlobalTape<T>,
    grad_recon: &Matrix<T>,
    acc: &mut DecoderStack<T>,
) -> Result<Matrix<T>> {
    let steps = tape.l1.len();
    if tape.l2.len() != steps || steps == 0 {
        return Err(Error::invalid("decode_global_backward", "inconsistent tape"));
    }
    let b = grad_recon.rows();
    let code_len = stack.l1.hidden_dim();
    let h2 = stack.l2.hidden_dim();

    acc.head_w.add_matmul_at_b(&tape.l2_h_final, grad_recon);
    acc.head_b.add_scaled(T::one(), &grad_recon.col_sum());
    let mut grad_h = Matrix::zeros(b, h2);
    grad_h.add_matmul_a_bt(grad_recon, &stack.head_w);
    let mut grad_c = Matrix::zeros(b, h2);

    let mut grad_seed_h = Matrix::zeros(b, code_len);
    let mut grad_seed_c = Matrix::zeros(b, code_len);
    for i in (0..steps).rev() {
        let g2 = lstm_step_backward(&stack.l2, &tape.l2[i], &grad_h, &grad_c, &mut acc.l2)?;
        grad_h = g2.h_prev;
        grad_c = g2.c_prev;
        grad_seed_h.add_assign_mat(&g2.x);
        let g1 =
            lstm_step_backward(&stack.l1, &tape.l1[i], &grad_seed_h, &grad_seed_c, &mut acc.l1)?;
        grad_seed_h = g1.h_prev;
        grad_seed_c = g1.c_prev;
    }
    Ok(grad_seed_h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn tiny_stack(seed: u64) -> DecoderStack<f64> {
        DecoderStack::init(3, 4, 2, &mut ChaCha20Rng::seed_from_u64(seed))
    }

    fn codes(seed: u64, b: usize, l: usize) -> Matrix<f64> {
        use rand::Rng;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Matrix::from_fn(b, l, |_, _| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
    }

    #[test]
    fn forward_injects_at_window_starts() {
        let s = tiny_stack(1);
        let out = decode_sequence(&s, &codes(2, 2, 3), 6, 2, false, false).unwrap();
        assert_eq!(out.layer1_steps, 3);
        assert_eq!(out.layer2_steps, 6);
        assert_eq!(out.injected_frames, vec![1, 3, 5]);
        assert_eq!(out.frames.len(), 6);
        assert_eq!((out.frames[0].rows(), out.frames[0].cols()), (2, 2));
    }

    #[test]
    fn reversed_decoder_injects_from_the_end() {
        let s = tiny_stack(3);
        let out = decode_sequence(&s, &codes(4, 2, 3), 6, 2, true, false).unwrap();
        assert_eq!(out.injected_frames, vec![6, 4, 2]);
    }

    #[test]
    fn reversed_decoder_is_forward_on_reversed_time() {
        // Same recurrence, emission rows mirrored: frame j of the reversed
        // decode equals frame M+1−j of the forward decode.
        let s = tiny_stack(5);
        let code = codes(6, 2, 3);
        let fwd = decode_sequence(&s, &code, 4, 2, false, false).unwrap();
        let bwd = decode_sequence(&s, &code, 4, 2, true, false).unwrap();
        for t in 0..4 {
            assert_eq!(fwd.frames[t].data(), bwd.frames[4 - 1 - t].data());
        }
    }

    #[test]
    fn stride_one_injects_every_frame() {
        let s = tiny_stack(7);
        let out = decode_sequence(&s, &codes(8, 1, 3), 3, 1, false, false).unwrap();
        assert_eq!(out.layer1_steps, 3);
        assert_eq!(out.injected_frames, vec![1, 2, 3]);
    }

    #[test]
    fn global_decoder_emits_one_frame() {
        let s = tiny_stack(9);
        let out = decode_global(&s, &codes(10, 3, 3), 2, false).unwrap();
        assert_eq!((out.recon.rows(), out.recon.cols()), (3, 2));
        assert_eq!(out.layer1_steps, 2);
        assert_eq!(out.layer2_steps, 2);
    }

    #[test]
    fn code_width_mismatch_rejected() {
        let s = tiny_stack(11);
        let err = decode_sequence(&s, &codes(12, 2, 4), 4, 2, false, false).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }

    #[test]
    fn indivisible_frame_count_rejected() {
        let s = tiny_stack(13);
        let err = decode_sequence(&s, &codes(14, 2, 3), 5, 2, false, false).unwrap_err();
        assert!(matches!(err, Error::Invalid { .. }));
    }

    #[test]
    fn decoders_with_different_params_disagree() {
        let (s1, s2) = (tiny_stack(15), tiny_stack(16));
        let code = codes(17, 2, 3);
        let a = decode_sequence(&s1, &code, 4, 2, false, false).unwrap();
        let b = decode_sequence(&s2, &code, 4, 2, false, false).unwrap();
        assert_ne!(a.frames[0].data(), b.frames[0].data());
    }
}
