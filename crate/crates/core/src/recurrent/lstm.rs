//! Plain LSTM cell (batched over rows) with a hand-derived backward pass.
//!
//! Gate layout follows f/i/o plus the candidate m:
//!   f = σ(x·W_f + h₋·U_f + b_f)   (likewise i, o)
//!   m = tanh(x·W_m + h₋·U_m + b_m)
//!   c = f∘c₋ + i∘m
//!   h = o∘tanh(c)
//!
//! An input dimension of zero is legal and realizes the "recurrent-only"
//! cells of the decoders: the W matrices are 0×H and x is a B×0 matrix.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{sigmoid, sigmoid_deriv_from_output, tanh_deriv_from_output, Matrix, Vector};
use crate::recurrent::uniform_matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<T> {
    pub w_f: Matrix<T>,
    pub w_i: Matrix<T>,
    pub w_o: Matrix<T>,
    pub w_m: Matrix<T>,
    pub u_f: Matrix<T>,
    pub u_i: Matrix<T>,
    pub u_o: Matrix<T>,
    pub u_m: Matrix<T>,
    pub b_f: Vector<T>,
    pub b_i: Vector<T>,
    pub b_o: Vector<T>,
    pub b_m: Vector<T>,
}

impl<T: Scalar> LstmParams<T> {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmParams {
            w_f: Matrix::zeros(input_dim, hidden),
            w_i: Matrix::zeros(input_dim, hidden),
            w_o: Matrix::zeros(input_dim, hidden),
            w_m: Matrix::zeros(input_dim, hidden),
            u_f: Matrix::zeros(hidden, hidden),
            u_i: Matrix::zeros(hidden, hidden),
            u_o: Matrix::zeros(hidden, hidden),
            u_m: Matrix::zeros(hidden, hidden),
            b_f: Vector::zeros(hidden),
            b_i: Vector::zeros(hidden),
            b_o: Vector::zeros(hidden),
            b_m: Vector::zeros(hidden),
        }
    }

    /// Uniform ±1/√fan_in weights; forget-gate bias 1, other biases 0.
    pub fn init<R: Rng>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_dim, hidden);
        for w in [&mut p.w_f, &mut p.w_i, &mut p.w_o, &mut p.w_m] {
            *w = uniform_matrix(input_dim, hidden, rng);
        }
        for u in [&mut p.u_f, &mut p.u_i, &mut p.u_o, &mut p.u_m] {
            *u = uniform_matrix(hidden, hidden, rng);
        }
        p.b_f = Vector::filled(hidden, T::one());
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w_f.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.u_f.rows()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.hidden_dim())
    }

    pub fn mats(&self) -> [(&'static str, &Matrix<T>); 8] {
        [
            ("w_f", &self.w_f),
            ("w_i", &self.w_i),
            ("w_o", &self.w_o),
            ("w_m", &self.w_m),
            ("u_f", &self.u_f),
            ("u_i", &self.u_i),
            ("u_o", &self.u_o),
            ("u_m", &self.u_m),
        ]
    }

    pub fn mats_mut(&mut self) -> [(&'static str, &mut Matrix<T>); 8] {
        [
            ("w_f", &mut self.w_f),
            ("w_i", &mut self.w_i),
            ("w_o", &mut self.w_o),
            ("w_m", &mut self.w_m),
            ("u_f", &mut self.u_f),
            ("u_i", &mut self.u_i),
            ("u_o", &mut self.u_o),
            ("u_m", &mut self.u_m),
        ]
    }

    pub fn vecs(&self) -> [(&'static str, &Vector<T>); 4] {
        [("b_f", &self.b_f), ("b_i", &self.b_i), ("b_o", &self.b_o), ("b_m", &self.b_m)]
    }

    pub fn vecs_mut(&mut self) -> [(&'static str, &mut Vector<T>); 4] {
        [
            ("b_f", &mut self.b_f),
            ("b_i", &mut self.b_i),
            ("b_o", &mut self.b_o),
            ("b_m", &mut self.b_m),
        ]
    }

    /// Visit every learnable slice in a fixed order. The slices borrow from
    /// `self`, so callers may collect them.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'static str, &'a [T])) {
        for (name, m) in self.mats() {
            f(name, m.data());
        }
        for (name, v) in self.vecs() {
            f(name, v.as_slice());
        }
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&'static str, &mut [T])) {
        for (name, m) in self.mats_mut() {
            f(name, m.data_mut());
        }
        for (name, v) in self.vecs_mut() {
            f(name, v.as_mut_slice());
        }
    }
}

/// Forward intermediates for one step, batched over rows.
#[derive(Debug, Clone)]
pub struct LstmTape<T> {
    pub x: Matrix<T>,
    pub h_prev: Matrix<T>,
    pub c_prev: Matrix<T>,
    pub f: Matrix<T>,
    pub i: Matrix<T>,
    pub o: Matrix<T>,
    pub m: Matrix<T>,
    pub c: Matrix<T>,
    pub tanh_c: Matrix<T>,
}

#[derive(Debug, Clone)]
pub struct LstmStepOut<T> {
    pub h: Matrix<T>,
    pub c: Matrix<T>,
    pub tape: Option<LstmTape<T>>,
}

/// Gradients flowing out of one step toward its inputs.
#[derive(Debug, Clone)]
pub struct LstmInputGrads<T> {
    pub x: Matrix<T>,
    pub h_prev: Matrix<T>,
    pub c_prev: Matrix<T>,
}

fn check_step_shapes<T: Scalar>(
    op: &'static str,
    p: &LstmParams<T>,
    x: &Matrix<T>,
    h_prev: &Matrix<T>,
    c_prev: &Matrix<T>,
) -> Result<()> {
    if x.cols() != p.input_dim() {
        return Err(Error::shape(
            op,
            format!("input has {} columns, cell expects {}", x.cols(), p.input_dim()),
        ));
    }
    if h_prev.cols() != p.hidden_dim() || c_prev.cols() != p.hidden_dim() {
        return Err(Error::shape(
            op,
            format!(
                "state width {}/{} does not match hidden size {}",
                h_prev.cols(),
                c_prev.cols(),
                p.hidden_dim()
            ),
        ));
    }
    if x.rows() != h_prev.rows() || x.rows() != c_prev.rows() {
        return Err(Error::shape(
            op,
            format!("batch sizes differ: x {}, h {}, c {}", x.rows(), h_prev.rows(), c_prev.rows()),
        ));
    }
    Ok(())
}

fn gate_preact<T: Scalar>(
    x: &Matrix<T>,
    w: &Matrix<T>,
    h_prev: &Matrix<T>,
    u: &Matrix<T>,
    b: &Vector<T>,
) -> Matrix<T> {
    let mut pre = Matrix::zeros(x.rows(), w.cols());
    pre.add_matmul(x, w);
    pre.add_matmul(h_prev, u);
    pre.add_row_broadcast(b);
    pre
}

pub fn lstm_step<T: Scalar>(
    p: &LstmParams<T>,
    x: &Matrix<T>,
    h_prev: &Matrix<T>,
    c_prev: &Matrix<T>,
    want_tape: bool,
) -> Result<LstmStepOut<T>> {
    check_step_shapes("lstm_step", p, x, h_prev, c_prev)?;

    let f = gate_preact(x, &p.w_f, h_prev, &p.u_f, &p.b_f).map(sigmoid);
    let i = gate_preact(x, &p.w_i, h_prev, &p.u_i, &p.b_i).map(sigmoid);
    let o = gate_preact(x, &p.w_o, h_prev, &p.u_o, &p.b_o).map(sigmoid);
    let m = gate_preact(x, &p.w_m, h_prev, &p.u_m, &p.b_m).map(|v| v.tanh());

    let c = f.hadamard(c_prev).add(&i.hadamard(&m));
    let tanh_c = c.map(|v| v.tanh());
    let h = o.hadamard(&tanh_c);

    let tape = want_tape.then(|| LstmTape {
        x: x.clone(),
        h_prev: h_prev.clone(),
        c_prev: c_prev.clone(),
        f,
        i,
        o,
        m,
        c: c.clone(),
        tanh_c,
    });
    Ok(LstmStepOut { h, c, tape })
}

/// Backward through one step. `grad_h`/`grad_c` are the gradients flowing
/// into this step's outputs; parameter gradients accumulate into `acc`.
pub fn lstm_step_backward<T: Scalar>(
    p: &LstmParams<T>,
    tape: &LstmTape<T>,
    grad_h: &Matrix<T>,
    grad_c: &Matrix<T>,
    acc: &mut LstmParams<T>,
) -> Result<LstmInputGrads<T>> {
    if !grad_h.same_shape(&tape.f) || !grad_c.same_shape(&tape.f) {
        return Err(Error::shape(
            "lstm_step_backward",
            format!(
                "upstream gradients {}x{} / {}x{} do not match step output {}x{}",
                grad_h.rows(),
                grad_h.cols(),
                grad_c.rows(),
                grad_c.cols(),
                tape.f.rows(),
                tape.f.cols()
            ),
        ));
    }

    // h = o∘tanh(c): split the h-gradient into o and c directions.
    let d_tanh_c = grad_h.hadamard(&tape.o).hadamard(&tape.tanh_c.map(tanh_deriv_from_output));
    let dc_total = grad_c.add(&d_tanh_c);

    let dp_o = grad_h.hadamard(&tape.tanh_c).hadamard(&tape.o.map(sigmoid_deriv_from_output));
    let dp_f = dc_total.hadamard(&tape.c_prev).hadamard(&tape.f.map(sigmoid_deriv_from_output));
    let dp_i = dc_total.hadamard(&tape.m).hadamard(&tape.i.map(sigmoid_deriv_from_output));
    let dp_m = dc_total.hadamard(&tape.i).hadamard(&tape.m.map(tanh_deriv_from_output));

    let grad_c_prev = dc_total.hadamard(&tape.f);

    let b = grad_h.rows();
    let mut grad_x = Matrix::zeros(b, p.input_dim());
    let mut grad_h_prev = Matrix::zeros(b, p.hidden_dim());
    for (dp, w, u) in [
        (&dp_f, &p.w_f, &p.u_f),
        (&dp_i, &p.w_i, &p.u_i),
        (&dp_o, &p.w_o, &p.u_o),
        (&dp_m, &p.w_m, &p.u_m),
    ] {
        grad_x.add_matmul_a_bt(dp, w);
        grad_h_prev.add_matmul_a_bt(dp, u);
    }

    for (dp, w_acc, u_acc, b_acc) in [
        (&dp_f, &mut acc.w_f, &mut acc.u_f, &mut acc.b_f),
        (&dp_i, &mut acc.w_i, &mut acc.u_i, &mut acc.b_i),
        (&dp_o, &mut acc.w_o, &mut acc.u_o, &mut acc.b_o),
        (&dp_m, &mut acc.w_m, &mut acc.u_m, &mut acc.b_m),
    ] {
        w_acc.add_matmul_at_b(&tape.x, dp);
        u_acc.add_matmul_at_b(&tape.h_prev, dp);
        let cs = dp.col_sum();
        b_acc.add_scaled(T::one(), &cs);
    }

    Ok(LstmInputGrads { x: grad_x, h_prev: grad_h_prev, c_prev: grad_c_prev })
}
