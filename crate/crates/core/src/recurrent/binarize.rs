//! Binarization of the hash layer's hidden state, plus the surrogates used
//! to push gradients through it.
//!
//! Forward hashing uses hard `sgn` (with `sgn(0) := +1` so codes are always
//! ±1). For learning, the sign is treated as the clipped identity
//! `p(h) = clamp(h, −1, 1)`, whose slope — 1 on |h| ≤ 1, boundary inclusive,
//! 0 outside — is the straight-through gate. A smooth `tanh` variant is
//! available as an alternative relaxation; with it, gradients flow through
//! tanh and emitted codes are the sign of the tanh output (= sign of h).

use crate::scalar::Scalar;

/// Hard sign with the +1 convention at zero.
#[inline]
pub fn sgn<T: Scalar>(h: T) -> T {
    if h >= T::zero() {
        T::one()
    } else {
        -T::one()
    }
}

/// Clipped-identity surrogate: −1 below −1, h inside [−1, 1], +1 above.
#[inline]
pub fn sgn_surrogate<T: Scalar>(h: T) -> T {
    if h < -T::one() {
        -T::one()
    } else if h > T::one() {
        T::one()
    } else {
        h
    }
}

/// Slope of the surrogate: 1 on |h| ≤ 1 (boundary inclusive), 0 outside.
#[inline]
pub fn sgn_surrogate_grad<T: Scalar>(h: T) -> T {
    if h.abs() <= T::one() {
        T::one()
    } else {
        T::zero()
    }
}

/// How the hash layer turns its hidden state into the signal consumed
/// downstream (next step's gates, decoders).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binarize {
    /// Hard ±1 codes forward, straight-through gate backward.
    Hard,
    /// Clipped identity forward and backward. The differentiable stand-in
    /// the gradient checks run on: on this model the analytic backward is
    /// exact away from the |h| = 1 kinks.
    Clip,
    /// tanh relaxation: smooth everywhere, codes binarized only at encode
    /// time.
    Tanh,
}

impl Binarize {
    #[inline]
    pub fn apply<T: Scalar>(self, h: T) -> T {
        match self {
            Binarize::Hard => sgn(h),
            Binarize::Clip => sgn_surrogate(h),
            Binarize::Tanh => h.tanh(),
        }
    }

    /// d(output)/dh as used in the backward pass.
    #[inline]
    pub fn gate<T: Scalar>(self, h: T) -> T {
        match self {
            Binarize::Hard | Binarize::Clip => sgn_surrogate_grad(h),
            Binarize::Tanh => {
                let t = h.tanh();
                T::one() - t * t
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_zero_convention() {
        assert_eq!(sgn(0.0_f64), 1.0);
        assert_eq!(sgn(-0.0_f64), 1.0); // -0.0 >= 0.0
        assert_eq!(sgn(-1e-300_f64), -1.0);
        assert_eq!(sgn(3.5_f64), 1.0);
    }

    #[test]
    fn surrogate_values() {
        assert_eq!(sgn_surrogate(0.3_f64), 0.3);
        assert_eq!(sgn_surrogate(-2.0_f64), -1.0);
        assert_eq!(sgn_surrogate(1.0_f64), 1.0);
        assert_eq!(sgn_surrogate(-1.0_f64), -1.0);
        assert_eq!(sgn_surrogate(7.25_f64), 1.0);
    }

    #[test]
    fn surrogate_slope_boundary_inclusive() {
        assert_eq!(sgn_surrogate_grad(0.999_f64), 1.0);
        assert_eq!(sgn_surrogate_grad(1.0_f64), 1.0);
        assert_eq!(sgn_surrogate_grad(1.001_f64), 0.0);
        assert_eq!(sgn_surrogate_grad(-1.0_f64), 1.0);
        assert_eq!(sgn_surrogate_grad(-1.001_f64), 0.0);
    }

    #[test]
    fn tanh_gate_is_tanh_derivative() {
        let h = 0.7_f64;
        let g = Binarize::Tanh.gate(h);
        let t = h.tanh();
        assert!((g - (1.0 - t * t)).abs() < 1e-15);
    }
}
