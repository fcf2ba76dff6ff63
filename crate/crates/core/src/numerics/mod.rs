//! Building blocks under everything else: dense matrices with deterministic
//! reduction order, pointwise activations, batch normalization, and the
//! finite-difference gradient oracle.

mod activation;
mod batchnorm;
mod finitediff;
mod matrix;

pub use activation::{
    activate, sigmoid, sigmoid_deriv_from_output, tanh, tanh_deriv_from_output, Act,
};
pub use batchnorm::{
    batch_norm, batch_norm_backward, BatchNormState, BnOutput, BnTape, Mode, DEFAULT_EPSILON,
    DEFAULT_MOMENTUM,
};
pub use finitediff::{finite_diff_grad, relative_error};
pub use matrix::{affine, dot_slices, Matrix, Vector};

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        // affine(αx+βy, W, b·(α+β)) == α·affine(x,W,b) + β·affine(y,W,b)
        // restated as: affine is linear in x for fixed W when b = 0.
        #[test]
        fn affine_linearity(
            xs in proptest::collection::vec(-10.0_f64..10.0, 6),
            ys in proptest::collection::vec(-10.0_f64..10.0, 6),
            ws in proptest::collection::vec(-10.0_f64..10.0, 12),
            alpha in -3.0_f64..3.0,
            beta in -3.0_f64..3.0,
        ) {
            let x = Matrix::from_vec(2, 3, xs).unwrap();
            let y = Matrix::from_vec(2, 3, ys).unwrap();
            let w = Matrix::from_vec(3, 4, ws).unwrap();
            let b = Vector::<f64>::zeros(4);

            let mut combo = x.clone();
            combo.scale(alpha);
            combo.add_scaled(beta, &y);
            let lhs = affine(&combo, &w, &b).unwrap();

            let mut rhs = affine(&x, &w, &b).unwrap();
            rhs.scale(alpha);
            let mut ry = affine(&y, &w, &b).unwrap();
            ry.scale(beta);
            rhs.add_assign_mat(&ry);

            for (l, r) in lhs.data().iter().zip(rhs.data().iter()) {
                prop_assert!((l - r).abs() <= 1e-12 * (1.0 + l.abs().max(r.abs())),
                    "linearity violated: {l} vs {r}");
            }
        }
    }
}
