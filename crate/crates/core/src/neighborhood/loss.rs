//! Neighborhood-preservation objective on code activations.
//!
//! For a pair of videos with supervision sign s ∈ {−1,+1}, the loss pulls
//! the length-normalized inner product of their real-valued activations
//! toward s, and regularizes each activation toward its own binary code:
//!
//!   loss = ((1/L)·h_iᵀh_j − s)² + η‖b_i − h_i‖² + η‖b_j − h_j‖²
//!
//! The codes b are treated as constants when differentiating — they are
//! the detached sign snapshots of h — so the loss is smooth in h and its
//! gradients are exact.

use crate::error::{Error, Result};
use crate::numerics::{dot_slices, Matrix, Vector};
use crate::scalar::Scalar;

/// Loss value and gradients on the two activations.
#[derive(Debug, Clone)]
pub struct NeighborLoss<T> {
    pub loss: T,
    pub grad_h_i: Vector<T>,
    pub grad_h_j: Vector<T>,
}

fn check_sign(s_ij: i8) -> Result<()> {
    if s_ij != 1 && s_ij != -1 {
        return Err(Error::invalid("neighbor_loss", format!("sign {s_ij} must be ±1")));
    }
    Ok(())
}

/// Pairwise neighborhood loss with gradients w.r.t. both activations.
pub fn neighbor_loss<T: Scalar>(
    h_i: &Vector<T>,
    h_j: &Vector<T>,
    s_ij: i8,
    b_i: &Vector<T>,
    b_j: &Vector<T>,
    eta: T,
) -> Result<NeighborLoss<T>> {
    check_sign(s_ij)?;
    let l = h_i.len();
    if h_j.len() != l || b_i.len() != l || b_j.len() != l {
        return Err(Error::shape(
            "neighbor_loss",
            format!("lengths h_i={l} h_j={} b_i={} b_j={}", h_j.len(), b_i.len(), b_j.len()),
        ));
    }
    if l == 0 {
        return Err(Error::invalid("neighbor_loss", "empty codes"));
    }
    if eta < T::zero() {
        return Err(Error::invalid("neighbor_loss", "eta must be non-negative"));
    }

    let mut grad_h_i = Vector::zeros(l);
    let mut grad_h_j = Vector::zeros(l);
    let mut loss = T::zero();
    accumulate_pair_terms(
        h_i.as_slice(),
        h_j.as_slice(),
        b_i.as_slice(),
        b_j.as_slice(),
        s_ij,
        eta,
        T::one(),
        &mut loss,
        grad_h_i.as_mut_slice(),
        grad_h_j.as_mut_slice(),
    );
    Ok(NeighborLoss { loss, grad_h_i, grad_h_j })
}

/// Core of the pairwise loss, operating on raw rows so the trainer can
/// accumulate thousands of pairs without allocating. Adds
/// `weight · loss` into `loss_acc` and `weight · gradient` into the two
/// gradient rows.
#[allow(clippy::too_many_arguments)]
pub(crate) fn accumulate_pair_terms<T: Scalar>(
    h_i: &[T],
    h_j: &[T],
    b_i: &[T],
    b_j: &[T],
    s_ij: i8,
    eta: T,
    weight: T,
    loss_acc: &mut T,
    grad_i: &mut [T],
    grad_j: &mut [T],
) {
    let l = T::of(h_i.len() as f64);
    let s = T::of(f64::from(s_ij));
    let sim = dot_slices(h_i, h_j) / l;
    let gap = sim - s;

    let mut quant = T::zero();
    for k in 0..h_i.len() {
        let qi = b_i[k] - h_i[k];
        let qj = b_j[k] - h_j[k];
        quant += qi * qi + qj * qj;
    }
    *loss_acc += weight * (gap * gap + eta * quant);

    let two = T::of(2.0);
    let sim_coeff = weight * two * gap / l;
    let quant_coeff = weight * two * eta;
    for k in 0..h_i.len() {
        grad_i[k] += sim_coeff * h_j[k] + quant_coeff * (h_i[k] - b_i[k]);
        grad_j[k] += sim_coeff * h_i[k] + quant_coeff * (h_j[k] - b_j[k]);
    }
}

/// All C(B,2) in-batch pairs: mean loss and the gradient of that mean on
/// the activation matrix. `signs(i, j)` supplies the supervision for a
/// pair of *batch positions*.
pub fn batch_neighbor_loss<T: Scalar>(
    h: &Matrix<T>,
    codes: &Matrix<T>,
    signs: impl Fn(usize, usize) -> i8,
    eta: T,
) -> Result<(T, Matrix<T>)> {
    if !h.same_shape(codes) {
        return Err(Error::shape(
            "batch_neighbor_loss",
            format!(
                "activations {}x{} vs codes {}x{}",
                h.rows(),
                h.cols(),
                codes.rows(),
                codes.cols()
            ),
        ));
    }
    let b = h.rows();
    if b < 2 {
        return Err(Error::invalid("batch_neighbor_loss", "need at least two videos for pairs"));
    }
    let pairs = b * (b - 1) / 2;
    let weight = T::one() / T::of(pairs as f64);
    let mut loss = T::zero();
    let mut grad = Matrix::zeros(b, h.cols());
    for i in 0..b {
        for j in (i + 1)..b {
            let s = signs(i, j);
            check_sign(s)?;
            // Split borrows: rows i and j of the gradient are disjoint.
            let (head, tail) = grad.data_mut().split_at_mut(j * h.cols());
            let gi = &mut head[i * h.cols()..(i + 1) * h.cols()];
            let gj = &mut tail[..h.cols()];
            accumulate_pair_terms(
                h.row(i),
                h.row(j),
                codes.row(i),
                codes.row(j),
                s,
                eta,
                weight,
                &mut loss,
                gi,
                gj,
            );
        }
    }
    Ok((loss, grad))
}
