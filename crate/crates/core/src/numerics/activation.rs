//! Pointwise nonlinearities for the recurrent cells.

use crate::numerics::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Act {
    Sigmoid,
    Tanh,
}

/// Numerically stable logistic sigmoid.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub fn tanh<T: Scalar>(x: T) -> T {
    x.tanh()
}

/// Derivative expressed in terms of the activation *output* y = σ(x): y(1−y).
#[inline]
pub fn sigmoid_deriv_from_output<T: Scalar>(y: T) -> T {
    y * (T::one() - y)
}

/// Derivative expressed in terms of the activation *output* y = tanh(x): 1−y².
#[inline]
pub fn tanh_deriv_from_output<T: Scalar>(y: T) -> T {
    T::one() - y * y
}

/// Elementwise activation over a matrix.
pub fn activate<T: Scalar>(x: &Matrix<T>, act: Act) -> Matrix<T> {
    match act {
        Act::Sigmoid => x.map(sigmoid),
        Act::Tanh => x.map(tanh),
    }
}
