//! Binary-output LSTM: the hash layer.
//!
//! Differences from the plain cell:
//!   * the recurrent input is the previous step's *binarized* output, not the
//!     raw hidden state;
//!   * the three multiplicative gates get diagonal peephole connections from
//!     the previous cell state (the candidate m does not);
//!   * the cell state is batch-normalized per time step (separate running
//!     statistics each step);
//!   * h = o∘c with no output tanh, and the emitted signal is binarize(h).
//!
//! Gradients cross the binarization through the straight-through gate (see
//! `binarize`): a step's backward receives the raw gradient w.r.t. its
//! emitted output and applies its own gate, so chaining steps gates each
//! hop at the step that produced it.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{
    batch_norm, batch_norm_backward, sigmoid, sigmoid_deriv_from_output, tanh_deriv_from_output,
    BatchNormState, BnTape, Matrix, Mode, Vector,
};
use crate::recurrent::{uniform_matrix, uniform_vector, Binarize};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct BlstmParams<T> {
    pub w_f: Matrix<T>,
    pub w_i: Matrix<T>,
    pub w_o: Matrix<T>,
    pub w_m: Matrix<T>,
    pub u_f: Matrix<T>,
    pub u_i: Matrix<T>,
    pub u_o: Matrix<T>,
    pub u_m: Matrix<T>,
    pub peep_f: Vector<T>,
    pub peep_i: Vector<T>,
    pub peep_o: Vector<T>,
    pub b_f: Vector<T>,
    pub b_i: Vector<T>,
    pub b_o: Vector<T>,
    pub b_m: Vector<T>,
    /// One normalization state per time step the cell will execute.
    pub bn: Vec<BatchNormState<T>>,
}

impl<T: Scalar> BlstmParams<T> {
    pub fn zeros(input_dim: usize, code_len: usize, steps: usize) -> Self {
        BlstmParams {
            w_f: Matrix::zeros(input_dim, code_len),
            w_i: Matrix::zeros(input_dim, code_len),
            w_o: Matrix::zeros(input_dim, code_len),
            w_m: Matrix::zeros(input_dim, code_len),
            u_f: Matrix::zeros(code_len, code_len),
            u_i: Matrix::zeros(code_len, code_len),
            u_o: Matrix::zeros(code_len, code_len),
            u_m: Matrix::zeros(code_len, code_len),
            peep_f: Vector::zeros(code_len),
            peep_i: Vector::zeros(code_len),
            peep_o: Vector::zeros(code_len),
            b_f: Vector::zeros(code_len),
            b_i: Vector::zeros(code_len),
            b_o: Vector::zeros(code_len),
            b_m: Vector::zeros(code_len),
            bn: (0..steps).map(|_| BatchNormState::new(code_len)).collect(),
        }
    }

    /// Uniform ±1/√fan_in weights (fan_in = code length for the recurrent
    /// and peephole weights); forget-gate bias 1, other biases 0; γ=1, β=0.
    pub fn init<R: Rng>(input_dim: usize, code_len: usize, steps: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_dim, code_len, steps);
        for w in [&mut p.w_f, &mut p.w_i, &mut p.w_o, &mut p.w_m] {
            *w = uniform_matrix(input_dim, code_len, rng);
        }
        for u in [&mut p.u_f, &mut p.u_i, &mut p.u_o, &mut p.u_m] {
            *u = uniform_matrix(code_len, code_len, rng);
        }
        for pv in [&mut p.peep_f, &mut p.peep_i, &mut p.peep_o] {
            *pv = uniform_vector(code_len, code_len, rng);
        }
        p.b_f = Vector::filled(code_len, T::one());
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w_f.rows()
    }

    pub fn code_len(&self) -> usize {
        self.u_f.rows()
    }

    pub fn steps(&self) -> usize {
        self.bn.len()
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = Self::zeros(self.input_dim(), self.code_len(), self.steps());
        for (zs, s) in z.bn.iter_mut().zip(self.bn.iter()) {
            // Gradient accumulators for γ/β must start at zero, and the
            // running slots are never read as gradients.
            zs.gamma = Vector::zeros(self.code_len());
            zs.running_var = Vector::zeros(self.code_len());
            zs.momentum = s.momentum;
            zs.epsilon = s.epsilon;
        }
        z
    }

    /// Fold freshly advanced running statistics back into the cell, one
    /// state per step. Only the running mean/variance move; γ/β belong to
    /// the optimizer.
    pub fn commit_running_stats(&mut self, states: &[BatchNormState<T>]) -> Result<()> {
        if states.len() != self.bn.len() {
            return Err(Error::invalid(
                "BlstmParams::commit_running_stats",
                format!("expected {} states, got {}", self.bn.len(), states.len()),
            ));
        }
        for (slot, fresh) in self.bn.iter_mut().zip(states.iter()) {
            slot.running_mean = fresh.running_mean.clone();
            slot.running_var = fresh.running_var.clone();
        }
        Ok(())
    }

    /// Visit every learnable slice (γ/β included, running stats excluded)
    /// in a fixed order. The slices borrow from `self`, so callers may
    /// collect them.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&str, &'a [T])) {
        for (name, m) in [
            ("w_f", &self.w_f),
            ("w_i", &self.w_i),
            ("w_o", &self.w_o),
            ("w_m", &self.w_m),
            ("u_f", &self.u_f),
            ("u_i", &self.u_i),
            ("u_o", &self.u_o),
            ("u_m", &self.u_m),
        ] {
            f(name, m.data());
        }
        for (name, v) in [
            ("peep_f", &self.peep_f),
            ("peep_i", &self.peep_i),
            ("peep_o", &self.peep_o),
            ("b_f", &self.b_f),
            ("b_i", &self.b_i),
            ("b_o", &self.b_o),
            ("b_m", &self.b_m),
        ] {
            f(name, v.as_slice());
        }
        for (s, st) in self.bn.iter().enumerate() {
            f(&format!("bn{s}.gamma"), st.gamma.as_slice());
            f(&format!("bn{s}.beta"), st.beta.as_slice());
        }
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&str, &mut [T])) {
        for (name, m) in [
            ("w_f", &mut self.w_f),
            ("w_i", &mut self.w_i),
            ("w_o", &mut self.w_o),
            ("w_m", &mut self.w_m),
            ("u_f", &mut self.u_f),
            ("u_i", &mut self.u_i),
            ("u_o", &mut self.u_o),
            ("u_m", &mut self.u_m),
        ] {
            f(name, m.data_mut());
        }
        for (name, v) in [
            ("peep_f", &mut self.peep_f),
            ("peep_i", &mut self.peep_i),
            ("peep_o", &mut self.peep_o),
            ("b_f", &mut self.b_f),
            ("b_i", &mut self.b_i),
            ("b_o", &mut self.b_o),
            ("b_m", &mut self.b_m),
        ] {
            f(name, v.as_mut_slice());
        }
        for (s, st) in self.bn.iter_mut().enumerate() {
            f(&format!("bn{s}.gamma"), st.gamma.as_mut_slice());
            f(&format!("bn{s}.beta"), st.beta.as_mut_slice());
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlstmTape<T> {
    pub step: usize,
    pub z: Matrix<T>,
    pub out_prev: Matrix<T>,
    pub c_prev: Matrix<T>,
    pub f: Matrix<T>,
    pub i: Matrix<T>,
    pub o: Matrix<T>,
    pub m: Matrix<T>,
    pub bn_tape: BnTape<T>,
    pub c: Matrix<T>,
    pub h: Matrix<T>,
    pub out: Matrix<T>,
}

#[derive(Debug, Clone)]
pub struct BlstmStepOut<T> {
    /// Pre-binarization hidden state o∘c.
    pub h: Matrix<T>,
    /// Binarized (or relaxed) emission consumed downstream.
    pub out: Matrix<T>,
    /// Post-normalization cell state.
    pub c: Matrix<T>,
    /// Normalization state with running statistics advanced (train mode);
    /// the caller decides whether to commit it into the parameters.
    pub bn_state: BatchNormState<T>,
    /// Present iff train mode and requested.
    pub tape: Option<BlstmTape<T>>,
}

#[derive(Debug, Clone)]
pub struct BlstmInputGrads<T> {
    pub z: Matrix<T>,
    /// Raw gradient w.r.t. the previous step's emitted output; the previous
    /// step applies its own straight-through gate.
    pub out_prev: Matrix<T>,
    pub c_prev: Matrix<T>,
}

// One argument per piece of recurrent state; bundling them would only
// rename the same eight things.
#[allow(clippy::too_many_arguments)]
pub fn blstm_step<T: Scalar>(
    p: &BlstmParams<T>,
    step: usize,
    z: &Matrix<T>,
    out_prev: &Matrix<T>,
    c_prev: &Matrix<T>,
    mode: Mode,
    binarize: Binarize,
    want_tape: bool,
) -> Result<BlstmStepOut<T>> {
    if step >= p.steps() {
        return Err(Error::invalid(
            "blstm_step",
            format!("step {step} out of range, cell holds {} normalization states", p.steps()),
        ));
    }
    if z.cols() != p.input_dim() {
        return Err(Error::shape(
            "blstm_step",
            format!("input has {} columns, cell expects {}", z.cols(), p.input_dim()),
        ));
    }
    let l = p.code_len();
    if out_prev.cols() != l || c_prev.cols() != l {
        return Err(Error::shape(
            "blstm_step",
            format!(
                "state width {}/{} does not match code length {l}",
                out_prev.cols(),
                c_prev.cols()
            ),
        ));
    }
    if z.rows() != out_prev.rows() || z.rows() != c_prev.rows() {
        return Err(Error::shape(
            "blstm_step",
            format!(
                "batch sizes differ: z {}, out {}, c {}",
                z.rows(),
                out_prev.rows(),
                c_prev.rows()
            ),
        ));
    }

    let b = z.rows();
    let pre = |w: &Matrix<T>, u: &Matrix<T>, peep: Option<&Vector<T>>, bias: &Vector<T>| {
        let mut acc = Matrix::zeros(b, l);
        acc.add_matmul(z, w);
        acc.add_matmul(out_prev, u);
        if let Some(pv) = peep {
            acc.add_hadamard_row_broadcast(c_prev, pv);
        }
        acc.add_row_broadcast(bias);
        acc
    };

    let f = pre(&p.w_f, &p.u_f, Some(&p.peep_f), &p.b_f).map(sigmoid);
    let i = pre(&p.w_i, &p.u_i, Some(&p.peep_i), &p.b_i).map(sigmoid);
    let o = pre(&p.w_o, &p.u_o, Some(&p.peep_o), &p.b_o).map(sigmoid);
    let m = pre(&p.w_m, &p.u_m, None, &p.b_m).map(|v| v.tanh());

    let a = f.hadamard(c_prev).add(&i.hadamard(&m));
    let bn_out = batch_norm(&a, &p.bn[step], mode)?;
    let c = bn_out.y;
    let h = o.hadamard(&c);
    let out = h.map(|v| binarize.apply(v));

    let tape = match (mode, want_tape, bn_out.tape) {
        (Mode::Train, true, Some(bn_tape)) => Some(BlstmTape {
            step,
            z: z.clone(),
            out_prev: out_prev.clone(),
            c_prev: c_prev.clone(),
            f,
            i,
            o,
            m,
            bn_tape,
            c: c.clone(),
            h: h.clone(),
            out: out.clone(),
        }),
        _ => None,
    };

    Ok(BlstmStepOut { h, out, c, bn_state: bn_out.state, tape })
}

/// Backward through one step. `grad_h` is the gradient arriving directly at
/// the pre-binarization hidden state (e.g. from a pairwise loss), `grad_out`
/// the raw gradient arriving at the emitted output (next step's gates,
/// decoders), `grad_c_in` the gradient arriving at this step's cell state
/// from the following step. Parameter gradients accumulate into `acc`.
#[allow(clippy::too_many_arguments)]
pub fn blstm_step_backward<T: Scalar>(
    p: &BlstmParams<T>,
    tape: &BlstmTape<T>,
    grad_h: &Matrix<T>,
    grad_out: &Matrix<T>,
    grad_c_in: &Matrix<T>,
    binarize: Binarize,
    acc: &mut BlstmParams<T>,
) -> Result<BlstmInputGrads<T>> {
    if !grad_h.same_shape(&tape.h)
        || !grad_out.same_shape(&tape.h)
        || !grad_c_in.same_shape(&tape.h)
    {
        return Err(Error::shape(
            "blstm_step_backward",
            format!(
                "upstream gradient shapes do not match step output {}x{}",
                tape.h.rows(),
                tape.h.cols()
            ),
        ));
    }

    // Straight-through: gradient w.r.t. the emission crosses into h through
    // the surrogate slope at this step's h.
    let gate = match binarize {
        Binarize::Tanh => tape.out.map(tanh_deriv_from_output),
        _ => tape.h.map(|v| crate::recurrent::sgn_surrogate_grad(v)),
    };
    let grad_h_total = grad_h.add(&grad_out.hadamard(&gate));

    // h = o∘c
    let dp_o = grad_h_total.hadamard(&tape.c).hadamard(&tape.o.map(sigmoid_deriv_from_output));
    let dc = grad_h_total.hadamard(&tape.o).add(grad_c_in);

    // c = batch_norm(a) using the batch statistics recorded in the tape.
    let step = tape.step;
    let (da, d_gamma, d_beta) = batch_norm_backward(&dc, &p.bn[step].gamma, &tape.bn_tape);

    // a = f∘c_prev + i∘m
    let dp_f = da.hadamard(&tape.c_prev).hadamard(&tape.f.map(sigmoid_deriv_from_output));
    let dp_i = da.hadamard(&tape.m).hadamard(&tape.i.map(sigmoid_deriv_from_output));
    let dp_m = da.hadamard(&tape.i).hadamard(&tape.m.map(tanh_deriv_from_output));

    // c_prev feeds a directly and the three peepholes.
    let mut grad_c_prev = da.hadamard(&tape.f);
    grad_c_prev.add_assign_mat(&dp_f.mul_row_broadcast(&p.peep_f));
    grad_c_prev.add_assign_mat(&dp_i.mul_row_broadcast(&p.peep_i));
    grad_c_prev.add_assign_mat(&dp_o.mul_row_broadcast(&p.peep_o));

    let b = grad_h.rows();
    let mut grad_z = Matrix::zeros(b, p.input_dim());
    let mut grad_out_prev = Matrix::zeros(b, p.code_len());
    for (dp, w, u) in [
        (&dp_f, &p.w_f, &p.u_f),
        (&dp_i, &p.w_i, &p.u_i),
        (&dp_o, &p.w_o, &p.u_o),
        (&dp_m, &p.w_m, &p.u_m),
    ] {
        grad_z.add_matmul_a_bt(dp, w);
        grad_out_prev.add_matmul_a_bt(dp, u);
    }

    for (dp, w_acc, u_acc, b_acc) in [
        (&dp_f, &mut acc.w_f, &mut acc.u_f, &mut acc.b_f),
        (&dp_i, &mut acc.w_i, &mut acc.u_i, &mut acc.b_i),
        (&dp_o, &mut acc.w_o, &mut acc.u_o, &mut acc.b_o),
        (&dp_m, &mut acc.w_m, &mut acc.u_m, &mut acc.b_m),
    ] {
        w_acc.add_matmul_at_b(&tape.z, dp);
        u_acc.add_matmul_at_b(&tape.out_prev, dp);
        let cs = dp.col_sum();
        b_acc.add_scaled(T::one(), &cs);
    }
    // Peephole gradients: columnwise sums of dp∘c_prev.
    for (dp, peep_acc) in
        [(&dp_f, &mut acc.peep_f), (&dp_i, &mut acc.peep_i), (&dp_o, &mut acc.peep_o)]
    {
        let cs = dp.hadamard(&tape.c_prev).col_sum();
        peep_acc.add_scaled(T::one(), &cs);
    }
    acc.bn[step].gamma.add_scaled(T::one(), &d_gamma);
    acc.bn[step].beta.add_scaled(T::one(), &d_beta);

    Ok(BlstmInputGrads { z: grad_z, out_prev: grad_out_prev, c_prev: grad_c_prev })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, relative_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    // ── Independent scalar oracle (plain loops, own batch-norm) ─────

    /// Batch-major rows, one `Vec<f64>` per sample.
    type Rows = Vec<Vec<f64>>;

    fn scalar_blstm_train(
        p: &BlstmParams<f64>,
        step: usize,
        z: &[Vec<f64>],
        out_prev: &[Vec<f64>],
        c_prev: &[Vec<f64>],
        binarize: Binarize,
    ) -> (Rows, Rows, Rows) {
        let b = z.len();
        let l = p.code_len();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut f = vec![vec![0.0; l]; b];
        let mut i = vec![vec![0.0; l]; b];
        let mut o = vec![vec![0.0; l]; b];
        let mut a = vec![vec![0.0; l]; b];
        for r in 0..b {
            for j in 0..l {
                let mut pf = p.b_f[j] + p.peep_f[j] * c_prev[r][j];
                let mut pi = p.b_i[j] + p.peep_i[j] * c_prev[r][j];
                let mut po = p.b_o[j] + p.peep_o[j] * c_prev[r][j];
                let mut pm = p.b_m[j];
                for (k, &zk) in z[r].iter().enumerate() {
                    pf += zk * p.w_f[(k, j)];
                    pi += zk * p.w_i[(k, j)];
                    po += zk * p.w_o[(k, j)];
                    pm += zk * p.w_m[(k, j)];
                }
                for (k, &bk) in out_prev[r].iter().enumerate() {
                    pf += bk * p.u_f[(k, j)];
                    pi += bk * p.u_i[(k, j)];
                    po += bk * p.u_o[(k, j)];
                    pm += bk * p.u_m[(k, j)];
                }
                f[r][j] = sig(pf);
                i[r][j] = sig(pi);
                o[r][j] = sig(po);
                let m = pm.tanh();
                a[r][j] = f[r][j] * c_prev[r][j] + i[r][j] * m;
            }
        }
        // Batch norm over the batch axis, biased variance.
        let st = &p.bn[step];
        let mut c = vec![vec![0.0; l]; b];
        for j in 0..l {
            let mean: f64 = (0..b).map(|r| a[r][j]).sum::<f64>() / b as f64;
            let var: f64 = (0..b).map(|r| (a[r][j] - mean).powi(2)).sum::<f64>() / b as f64;
            let inv = 1.0 / (var + st.epsilon).sqrt();
            for r in 0..b {
                c[r][j] = st.gamma[j] * (a[r][j] - mean) * inv + st.beta[j];
            }
        }
        let mut h = vec![vec![0.0; l]; b];
        let mut out = vec![vec![0.0; l]; b];
        for r in 0..b {
            for j in 0..l {
                h[r][j] = o[r][j] * c[r][j];
                out[r][j] = binarize.apply(h[r][j]);
            }
        }
        (h, out, c)
    }

    fn seeded(input: usize, code: usize, steps: usize, seed: u64) -> BlstmParams<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        BlstmParams::init(input, code, steps, &mut rng)
    }

    fn rand_mat(r: usize, c: usize, rng: &mut ChaCha20Rng) -> Matrix<f64> {
        Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn matches_scalar_oracle_in_train_mode() {
        let p = seeded(4, 3, 1, 17);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let z = rand_mat(3, 4, &mut rng);
        let out_prev = Matrix::from_fn(3, 3, |_, _| if rng.gen_bool(0.5) { 1.0 } else { -1.0 });
        let c_prev = rand_mat(3, 3, &mut rng);

        let got =
            blstm_step(&p, 0, &z, &out_prev, &c_prev, Mode::Train, Binarize::Hard, false).unwrap();

        let zs: Vec<Vec<f64>> = (0..3).map(|r| z.row(r).to_vec()).collect();
        let os: Vec<Vec<f64>> = (0..3).map(|r| out_prev.row(r).to_vec()).collect();
        let cs: Vec<Vec<f64>> = (0..3).map(|r| c_prev.row(r).to_vec()).collect();
        let (h, out, c) = scalar_blstm_train(&p, 0, &zs, &os, &cs, Binarize::Hard);
        for r in 0..3 {
            for j in 0..3 {
                assert!((got.h[(r, j)] - h[r][j]).abs() < 1e-12, "h[{r},{j}]");
                assert!((got.c[(r, j)] - c[r][j]).abs() < 1e-12, "c[{r},{j}]");
                assert_eq!(got.out[(r, j)], out[r][j], "out[{r},{j}]");
            }
        }
    }

    #[test]
    fn zero_params_give_zero_cell_and_plus_one_codes() {
        // f=i=o=σ(0)=½, m=0, c_prev=0 → a=0; a constant per column → c=β=0;
        // h = 0; sgn(0) = +1.
        let p = BlstmParams::<f64>::zeros(2, 3, 1);
        let z = Matrix::from_f64s(&[&[0.4, -0.7], &[1.0, 0.0]]);
        let prev = Matrix::zeros(2, 3);
        let got = blstm_step(&p, 0, &z, &prev, &prev, Mode::Train, Binarize::Hard, false).unwrap();
        for r in 0..2 {
            for j in 0..3 {
                assert_eq!(got.c[(r, j)], 0.0);
                assert_eq!(got.h[(r, j)], 0.0);
                assert_eq!(got.out[(r, j)], 1.0);
            }
        }
        // Also in infer mode with the initial running stats.
        let one = blstm_step(&p, 0, &z, &prev, &prev, Mode::Infer, Binarize::Hard, false).unwrap();
        assert_eq!(one.out[(0, 0)], 1.0);
        assert_eq!(one.h[(0, 0)], 0.0);
    }

    #[test]
    fn hard_outputs_are_plus_minus_one() {
        let p = seeded(3, 8, 1, 23);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let z = rand_mat(4, 3, &mut rng);
        let prev_out = Matrix::filled(4, 8, -1.0);
        let prev_c = Matrix::zeros(4, 8);
        let got =
            blstm_step(&p, 0, &z, &prev_out, &prev_c, Mode::Train, Binarize::Hard, false).unwrap();
        for v in got.out.data() {
            assert!(*v == 1.0 || *v == -1.0, "non-binary output {v}");
        }
    }

    #[test]
    fn train_mode_advances_running_stats_infer_does_not() {
        let p = seeded(2, 3, 1, 31);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let z = rand_mat(3, 2, &mut rng);
        let prev = Matrix::filled(3, 3, -1.0);
        let c0 = Matrix::zeros(3, 3);
        let tr = blstm_step(&p, 0, &z, &prev, &c0, Mode::Train, Binarize::Hard, false).unwrap();
        assert_ne!(tr.bn_state.running_mean, p.bn[0].running_mean);
        let inf = blstm_step(&p, 0, &z, &prev, &c0, Mode::Infer, Binarize::Hard, false).unwrap();
        assert_eq!(inf.bn_state, p.bn[0]);
    }

    #[test]
    fn single_row_train_batch_rejected() {
        let p = seeded(2, 3, 1, 31);
        let z = Matrix::zeros(1, 2);
        let prev = Matrix::zeros(1, 3);
        let err = blstm_step(&p, 0, &z, &prev, &prev, Mode::Train, Binarize::Hard, false);
        assert!(err.is_err());
    }

    // ── Gradient checks on the clipped-identity relaxation ──────────

    struct Probe {
        wh: Matrix<f64>,
        wo: Matrix<f64>,
        wc: Matrix<f64>,
    }

    /// One relaxed step; loss probes h, out and c linearly.
    fn step_loss(
        p: &BlstmParams<f64>,
        z: &Matrix<f64>,
        out_prev: &Matrix<f64>,
        c_prev: &Matrix<f64>,
        probe: &Probe,
    ) -> f64 {
        let got =
            blstm_step(p, 0, z, out_prev, c_prev, Mode::Train, Binarize::Clip, false).unwrap();
        let mut s = 0.0;
        for (a, b) in got.h.data().iter().zip(probe.wh.data()) {
            s += a * b;
        }
        for (a, b) in got.out.data().iter().zip(probe.wo.data()) {
            s += a * b;
        }
        for (a, b) in got.c.data().iter().zip(probe.wc.data()) {
            s += a * b;
        }
        s
    }

    fn assert_no_kinks(h: &Matrix<f64>) {
        for v in h.data() {
            assert!(
                (v.abs() - 1.0).abs() > 1e-3,
                "test point too close to the surrogate kink: h = {v}"
            );
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let p = seeded(3, 4, 1, 41);
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let z = rand_mat(3, 3, &mut rng);
        let out_prev = rand_mat(3, 4, &mut rng);
        let c_prev = rand_mat(3, 4, &mut rng);
        let probe = Probe {
            wh: rand_mat(3, 4, &mut rng),
            wo: rand_mat(3, 4, &mut rng),
            wc: rand_mat(3, 4, &mut rng),
        };

        let got =
            blstm_step(&p, 0, &z, &out_prev, &c_prev, Mode::Train, Binarize::Clip, true).unwrap();
        assert_no_kinks(&got.h);

        let mut acc = p.zeros_like();
        let input_grads = blstm_step_backward(
            &p,
            got.tape.as_ref().unwrap(),
            &probe.wh,
            &probe.wo,
            &Matrix::zeros(3, 4),
            Binarize::Clip,
            &mut acc,
        )
        .unwrap();
        // dL/dc direct: the wc probe adds to the cell-state gradient; feed it
        // through grad_c_in instead to exercise that path too.
        let mut acc2 = p.zeros_like();
        let input_grads2 = blstm_step_backward(
            &p,
            got.tape.as_ref().unwrap(),
            &probe.wh,
            &probe.wo,
            &probe.wc,
            Binarize::Clip,
            &mut acc2,
        )
        .unwrap();
        // input check uses acc2/input_grads2 (full probe); the first call only
        // documents that grad_c_in defaults to zero elsewhere.
        let _ = (input_grads, acc);

        let flat: Vec<f64> =
            z.data().iter().chain(out_prev.data()).chain(c_prev.data()).copied().collect();
        let numeric = finite_diff_grad(
            |v| {
                let z2 = Matrix::from_vec(3, 3, v[0..9].to_vec()).unwrap();
                let o2 = Matrix::from_vec(3, 4, v[9..21].to_vec()).unwrap();
                let c2 = Matrix::from_vec(3, 4, v[21..33].to_vec()).unwrap();
                step_loss(&p, &z2, &o2, &c2, &probe)
            },
            &flat,
            1e-6,
        )
        .unwrap();
        let analytic: Vec<f64> = input_grads2
            .z
            .data()
            .iter()
            .chain(input_grads2.out_prev.data())
            .chain(input_grads2.c_prev.data())
            .copied()
            .collect();
        // The out_prev gradient returned here is the *raw* gradient (to be
        // gated by the producing step); in this single-step test nothing
        // produced out_prev, so finite differences see it directly.
        for (k, (&n, &a)) in numeric.iter().zip(analytic.iter()).enumerate() {
            assert!(relative_error(n, a) <= 1e-4, "input grad {k}: numeric {n} analytic {a}");
        }

        // Parameters, tensor by tensor.
        let mut names = Vec::new();
        p.visit(&mut |name, _| names.push(name.to_string()));
        for target in names {
            let mut base = Vec::new();
            p.visit(&mut |name, s| {
                if name == target {
                    base.extend_from_slice(s);
                }
            });
            let numeric = finite_diff_grad(
                |v| {
                    let mut p2 = p.clone();
                    p2.visit_mut(&mut |name, s| {
                        if name == target {
                            s.copy_from_slice(v);
                        }
                    });
                    step_loss(&p2, &z, &out_prev, &c_prev, &probe)
                },
                &base,
                1e-6,
            )
            .unwrap();
            let mut analytic = Vec::new();
            acc2.visit(&mut |name, s| {
                if name == target {
                    analytic.extend_from_slice(s);
                }
            });
            for (k, (&n, &a)) in numeric.iter().zip(analytic.iter()).enumerate() {
                assert!(relative_error(n, a) <= 1e-4, "{target}[{k}]: numeric {n} analytic {a}");
            }
        }
    }

    #[test]
    fn two_chained_steps_match_finite_differences() {
        let p = seeded(2, 3, 2, 53);
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let z0 = rand_mat(3, 2, &mut rng);
        let z1 = rand_mat(3, 2, &mut rng);
        let wh = rand_mat(3, 3, &mut rng);

        let run = |p: &BlstmParams<f64>, z0: &Matrix<f64>, z1: &Matrix<f64>| {
            let prev_out = Matrix::filled(3, 3, -1.0);
            let prev_c = Matrix::zeros(3, 3);
            let s0 = blstm_step(p, 0, z0, &prev_out, &prev_c, Mode::Train, Binarize::Clip, true)
                .unwrap();
            let s1 =
                blstm_step(p, 1, z1, &s0.out, &s0.c, Mode::Train, Binarize::Clip, true).unwrap();
            (s0, s1)
        };
        let loss = |p: &BlstmParams<f64>, z0: &Matrix<f64>, z1: &Matrix<f64>| {
            let (_, s1) = run(p, z0, z1);
            s1.h.data().iter().zip(wh.data()).map(|(a, b)| a * b).sum::<f64>()
        };

        let (s0, s1) = run(&p, &z0, &z1);
        assert_no_kinks(&s0.h);
        assert_no_kinks(&s1.h);

        let mut acc = p.zeros_like();
        let zero = Matrix::zeros(3, 3);
        let g1 = blstm_step_backward(
            &p,
            s1.tape.as_ref().unwrap(),
            &wh,
            &zero,
            &zero,
            Binarize::Clip,
            &mut acc,
        )
        .unwrap();
        let g0 = blstm_step_backward(
            &p,
            s0.tape.as_ref().unwrap(),
            &zero,
            &g1.out_prev,
            &g1.c_prev,
            Binarize::Clip,
            &mut acc,
        )
        .unwrap();
        let _ = g0;

        let mut names = Vec::new();
        p.visit(&mut |name, _| names.push(name.to_string()));
        for target in names {
            let mut base = Vec::new();
            p.visit(&mut |name, s| {
                if name == target {
                    base.extend_from_slice(s);
                }
            });
            let numeric = finite_diff_grad(
                |v| {
                    let mut p2 = p.clone();
                    p2.visit_mut(&mut |name, s| {
                        if name == target {
                            s.copy_from_slice(v);
                        }
                    });
                    loss(&p2, &z0, &z1)
                },
                &base,
                1e-6,
            )
            .unwrap();
            let mut analytic = Vec::new();
            acc.visit(&mut |name, s| {
                if name == target {
                    analytic.extend_from_slice(s);
                }
            });
            for (k, (&n, &a)) in numeric.iter().zip(analytic.iter()).enumerate() {
                assert!(
                    relative_error(n, a) <= 1e-4 || (n - a).abs() <= 1e-7,
                    "{target}[{k}]: numeric {n} analytic {a}"
                );
            }
        }
    }

    #[test]
    fn saturated_hidden_state_blocks_emission_gradient() {
        // Scale γ so |h| > 1 everywhere: the straight-through gate closes and
        // a gradient arriving at the emission dies completely.
        let mut p = seeded(2, 3, 1, 61);
        for st in p.bn.iter_mut() {
            st.gamma = Vector::filled(3, 500.0);
        }
        // Keep o away from 0 so h = o∘c is large.
        p.b_o = Vector::filled(3, 4.0);
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let z = rand_mat(4, 2, &mut rng);
        let prev_out = Matrix::filled(4, 3, -1.0);
        let prev_c = Matrix::zeros(4, 3);
        let got =
            blstm_step(&p, 0, &z, &prev_out, &prev_c, Mode::Train, Binarize::Hard, true).unwrap();
        for v in got.h.data() {
            assert!(v.abs() > 1.0, "precondition failed: |h| = {} not saturated", v.abs());
        }

        let mut acc = p.zeros_like();
        let g = blstm_step_backward(
            &p,
            got.tape.as_ref().unwrap(),
            &Matrix::zeros(4, 3),
            &rand_mat(4, 3, &mut rng),
            &Matrix::zeros(4, 3),
            Binarize::Hard,
            &mut acc,
        )
        .unwrap();
        assert!(g.z.data().iter().all(|&v| v == 0.0));
        assert!(g.out_prev.data().iter().all(|&v| v == 0.0));
        assert!(g.c_prev.data().iter().all(|&v| v == 0.0));
        acc.visit(&mut |name, s| {
            assert!(s.iter().all(|&v| v == 0.0), "{name} leaked gradient past closed gate");
        });
    }

    #[test]
    fn forward_is_deterministic() {
        let p = seeded(3, 5, 1, 71);
        let mut rng = ChaCha20Rng::seed_from_u64(33);
        let z = rand_mat(3, 3, &mut rng);
        let prev_out = Matrix::filled(3, 5, -1.0);
        let prev_c = Matrix::zeros(3, 5);
        let a =
            blstm_step(&p, 0, &z, &prev_out, &prev_c, Mode::Train, Binarize::Hard, false).unwrap();
        let b =
            blstm_step(&p, 0, &z, &prev_out, &prev_c, Mode::Train, Binarize::Hard, false).unwrap();
        assert_eq!(a.h, b.h);
        assert_eq!(a.out, b.out);
        assert_eq!(a.c, b.c);
        assert_eq!(a.bn_state, b.bn_state);
    }
}
