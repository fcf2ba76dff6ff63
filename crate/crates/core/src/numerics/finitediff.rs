//! Central-difference gradient estimation.
//!
//! This is the independent oracle every hand-derived backward pass in the
//! crate is checked against: perturb one coordinate at a time and evaluate
//! the loss twice, never touching the analytic code path.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Central-difference gradient of `f` at `x`: gᵢ = (f(x+εeᵢ) − f(x−εeᵢ)) / 2ε.
pub fn finite_diff_grad<T: Scalar>(
    mut f: impl FnMut(&[T]) -> T,
    x: &[T],
    eps: T,
) -> Result<Vec<T>> {
    // Negated on purpose: a NaN eps must land in the error branch.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(eps > T::zero()) {
        return Err(Error::invalid("finite_diff_grad", format!("eps must be > 0, got {eps}")));
    }
    let mut point = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    let two = T::of(2.0);
    for i in 0..x.len() {
        let orig = point[i];
        point[i] = orig + eps;
        let hi = f(&point);
        point[i] = orig - eps;
        let lo = f(&point);
        point[i] = orig;
        grad.push((hi - lo) / (two * eps));
    }
    Ok(grad)
}

/// |a−b| scaled by the larger magnitude, floored to dodge 0/0. Shared by the
/// gradient-fidelity tests.
pub fn relative_error<T: Scalar>(a: T, b: T) -> T {
    let denom = (a.abs() + b.abs()).max(T::of(1e-8));
    (a - b).abs() / denom
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let g = finite_diff_grad(|x| x[0] * x[0], &[3.0_f64], 1e-6).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6, "d/dx x² at 3 = {}", g[0]);
    }

    #[test]
    fn constant_has_zero_gradient() {
        let g = finite_diff_grad(|_| 42.0_f64, &[1.0, -7.0, 0.0], 1e-5).unwrap();
        for v in g {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn product_gradient() {
        let g = finite_diff_grad(|x| x[0] * x[1], &[2.0_f64, 5.0], 1e-6).unwrap();
        assert!((g[0] - 5.0).abs() < 1e-6);
        assert!((g[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn non_positive_eps_rejected() {
        assert!(finite_diff_grad(|x: &[f64]| x[0], &[1.0], 0.0).is_err());
        assert!(finite_diff_grad(|x: &[f64]| x[0], &[1.0], -1e-6).is_err());
    }

    #[test]
    fn quadratic_form_matches_analytic() {
        // f(x) = xᵀAx with a fixed non-symmetric A; ∇f = (A + Aᵀ)x.
        let a = [[1.0, 2.0, -0.5], [0.3, -1.2, 0.8], [2.5, 0.0, 0.7]];
        let x0 = [0.4_f64, -1.1, 2.3];
        let f = |x: &[f64]| {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += x[i] * a[i][j] * x[j];
                }
            }
            s
        };
        let numeric = finite_diff_grad(f, &x0, 1e-6).unwrap();
        for i in 0..3 {
            let mut analytic = 0.0;
            for j in 0..3 {
                analytic += (a[i][j] + a[j][i]) * x0[j];
            }
            let rel = relative_error(numeric[i], analytic);
            assert!(rel <= 1e-6, "coord {i}: numeric {} analytic {analytic} rel {rel}", numeric[i]);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let g = finite_diff_grad(|x: &[f32]| x[0] * x[0], &[3.0_f32], 1e-2).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-2, "f32 gradient: {}", g[0]);
    }
}
