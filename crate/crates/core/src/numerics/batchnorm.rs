//! Per-feature batch normalization over the mini-batch (row) axis.
//!
//! The recurrent encoder applies this to the cell state once per time step,
//! holding a separate `BatchNormState` for each step. Train mode normalizes
//! with the current batch statistics (biased variance, divide by B) and
//! returns an updated copy of the running statistics; infer mode normalizes
//! with the stored running statistics and leaves them untouched. The update
//! rule is `running ← momentum·running + (1−momentum)·batch`.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};
use crate::scalar::Scalar;

pub const DEFAULT_MOMENTUM: f64 = 0.9;
pub const DEFAULT_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState<T> {
    pub gamma: Vector<T>,
    pub beta: Vector<T>,
    pub running_mean: Vector<T>,
    pub running_var: Vector<T>,
    pub momentum: T,
    pub epsilon: T,
}

impl<T: Scalar> BatchNormState<T> {
    pub fn new(dim: usize) -> Self {
        Self::with(dim, T::of(DEFAULT_MOMENTUM), T::of(DEFAULT_EPSILON))
    }

    pub fn with(dim: usize, momentum: T, epsilon: T) -> Self {
        BatchNormState {
            gamma: Vector::filled(dim, T::one()),
            beta: Vector::zeros(dim),
            running_mean: Vector::zeros(dim),
            running_var: Vector::filled(dim, T::one()),
            momentum,
            epsilon,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }
}

/// Cached intermediates for the train-mode backward pass.
#[derive(Debug, Clone)]
pub struct BnTape<T> {
    pub x_hat: Matrix<T>,
    pub inv_std: Vector<T>,
}

#[derive(Debug, Clone)]
pub struct BnOutput<T> {
    pub y: Matrix<T>,
    /// State with running statistics advanced (train) or copied (infer).
    pub state: BatchNormState<T>,
    /// Present in train mode only.
    pub tape: Option<BnTape<T>>,
}

pub fn batch_norm<T: Scalar>(
    x: &Matrix<T>,
    state: &BatchNormState<T>,
    mode: Mode,
) -> Result<BnOutput<T>> {
    if x.cols() != state.dim() {
        return Err(Error::shape(
            "batch_norm",
            format!("input has {} columns, state is for {}", x.cols(), state.dim()),
        ));
    }
    match mode {
        Mode::Train => {
            if x.rows() < 2 {
                return Err(Error::invalid(
                    "batch_norm",
                    format!("train mode needs at least 2 rows, got {}", x.rows()),
                ));
            }
            let mean = x.col_mean();
            let var = x.col_var(&mean);
            let inv_std = var.map(|v| T::one() / (v + state.epsilon).sqrt());

            let mut x_hat = x.clone();
            for i in 0..x_hat.rows() {
                for ((v, &m), &s) in
                    x_hat.row_mut(i).iter_mut().zip(mean.iter()).zip(inv_std.iter())
                {
                    *v = (*v - m) * s;
                }
            }
            let mut y = x_hat.mul_row_broadcast(&state.gamma);
            y.add_row_broadcast(&state.beta);

            let mut next = state.clone();
            let keep = state.momentum;
            let take = T::one() - keep;
            for (r, &b) in next.running_mean.iter_mut().zip(mean.iter()) {
                *r = keep * *r + take * b;
            }
            for (r, &b) in next.running_var.iter_mut().zip(var.iter()) {
                *r = keep * *r + take * b;
            }

            Ok(BnOutput { y, state: next, tape: Some(BnTape { x_hat, inv_std }) })
        }
        Mode::Infer => {
            let inv_std = state.running_var.map(|v| T::one() / (v + state.epsilon).sqrt());
            let mut y = x.clone();
            for i in 0..y.rows() {
                for (((v, &m), &s), (&g, &b)) in y
                    .row_mut(i)
                    .iter_mut()
                    .zip(state.running_mean.iter())
                    .zip(inv_std.iter())
                    .zip(state.gamma.iter().zip(state.beta.iter()))
                {
                    *v = (*v - m) * s * g + b;
                }
            }
            Ok(BnOutput { y, state: state.clone(), tape: None })
        }
    }
}

/// Backward through train-mode normalization (batch statistics from the tape).
/// Returns (grad_x, grad_gamma, grad_beta).
pub fn batch_norm_backward<T: Scalar>(
    grad_y: &Matrix<T>,
    gamma: &Vector<T>,
    tape: &BnTape<T>,
) -> (Matrix<T>, Vector<T>, Vector<T>) {
    let b = grad_y.rows();
    let d = grad_y.cols();
    assert!(tape.x_hat.rows() == b && tape.x_hat.cols() == d, "batch_norm_backward: tape shape");

    let grad_beta = grad_y.col_sum();
    let grad_gamma = grad_y.hadamard(&tape.x_hat).col_sum();

    let dx_hat = grad_y.mul_row_broadcast(gamma);
    let sum_dx_hat = dx_hat.col_sum();
    let sum_dx_hat_x_hat = dx_hat.hadamard(&tape.x_hat).col_sum();

    let bt = T::of(b as f64);
    let mut grad_x = Matrix::zeros(b, d);
    for i in 0..b {
        let dxh = dx_hat.row(i);
        let xh = tape.x_hat.row(i);
        let out = grad_x.row_mut(i);
        for j in 0..d {
            out[j] =
                tape.inv_std[j] / bt * (bt * dxh[j] - sum_dx_hat[j] - xh[j] * sum_dx_hat_x_hat[j]);
        }
    }
    (grad_x, grad_gamma, grad_beta)
}
