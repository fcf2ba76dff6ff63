//! Recurrent cells: the plain LSTM used by the first encoder layer and all
//! decoders, and the binary-output LSTM that emits hash codes.

mod binarize;
mod blstm;
mod lstm;

pub use binarize::{sgn, sgn_surrogate, sgn_surrogate_grad, Binarize};
pub use blstm::{
    blstm_step, blstm_step_backward, BlstmInputGrads, BlstmParams, BlstmStepOut, BlstmTape,
};
pub use lstm::{lstm_step, lstm_step_backward, LstmInputGrads, LstmParams, LstmStepOut, LstmTape};

use rand::Rng;

use crate::numerics::{Matrix, Vector};
use crate::scalar::Scalar;

/// Uniform ±1/√fan_in init, fan_in = rows (the input side of x·W).
pub(crate) fn uniform_matrix<T: Scalar, R: Rng>(
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> Matrix<T> {
    let bound = if rows == 0 { 0.0 } else { 1.0 / (rows as f64).sqrt() };
    Matrix::from_fn(rows, cols, |_, _| T::of(rng.gen_range(-bound..=bound)))
}

/// Uniform ±1/√fan_in init for vector-shaped (diagonal) weights.
pub(crate) fn uniform_vector<T: Scalar, R: Rng>(
    len: usize,
    fan_in: usize,
    rng: &mut R,
) -> Vector<T> {
    let bound = if fan_in == 0 { 0.0 } else { 1.0 / (fan_in as f64).sqrt() };
    Vector::from_vec((0..len).map(|_| T::of(rng.gen_range(-bound..=bound))).collect())
}
