//! Reconstruction objective: squared error of the forward and reversed
//! frame reconstructions against the input frames, plus squared error of
//! the global reconstruction against the mean frame. Per video the three
//! parts simply add.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};
use crate::scalar::Scalar;

/// Reconstruction loss of a single video, with gradients on each
/// reconstruction (the inputs are targets, so they get none).
#[derive(Debug, Clone)]
pub struct ReconLoss<T> {
    pub forward: T,
    pub backward: T,
    pub global: T,
    pub total: T,
    pub grad_forward: Matrix<T>,
    pub grad_backward: Matrix<T>,
    pub grad_global: Vector<T>,
}

/// The global decoder's target: the feature-wise mean over frames.
pub fn mean_frame<T: Scalar>(video: &Matrix<T>) -> Vector<T> {
    video.col_mean()
}

fn squared_error_and_grad<T: Scalar>(rec: &Matrix<T>, target: &Matrix<T>) -> (T, Matrix<T>) {
    let mut diff = rec.sub(target);
    let loss = diff.sum_sq();
    diff.scale(T::of(2.0));
    (loss, diff)
}

/// Loss and gradients for one video's three reconstructions.
pub fn recon_loss<T: Scalar>(
    video: &Matrix<T>,
    fwd_rec: &Matrix<T>,
    bwd_rec: &Matrix<T>,
    glob_rec: &Vector<T>,
) -> Result<ReconLoss<T>> {
    if !fwd_rec.same_shape(video) || !bwd_rec.same_shape(video) {
        return Err(Error::shape(
            "recon_loss",
            format!(
                "reconstructions {}x{} / {}x{} against video {}x{}",
                fwd_rec.rows(),
                fwd_rec.cols(),
                bwd_rec.rows(),
                bwd_rec.cols(),
                video.rows(),
                video.cols()
            ),
        ));
    }
    if glob_rec.len() != video.cols() {
        return Err(Error::shape(
            "recon_loss",
            format!("global reconstruction width {} against {}", glob_rec.len(), video.cols()),
        ));
    }
    let (forward, grad_forward) = squared_error_and_grad(fwd_rec, video);
    let (backward, grad_backward) = squared_error_and_grad(bwd_rec, video);

    let target = mean_frame(video);
    let mut grad_global = Vector::zeros(glob_rec.len());
    let mut global = T::zero();
    for j in 0..glob_rec.len() {
        let diff = glob_rec[j] - target[j];
        global += diff * diff;
        grad_global[j] = T::of(2.0) * diff;
    }

    let total = forward + backward + global;
    Ok(ReconLoss { forward, backward, global, total, grad_forward, grad_backward, grad_global })
}

/// Per-video reconstruction totals for a batch, from time-major decoder
/// outputs (`fwd[t]` holds frame t+1 of every video).
#[derive(Debug, Clone)]
pub struct BatchRecon<T> {
    pub per_video: Vec<T>,
    pub forward: T,
    pub backward: T,
    pub global: T,
}

impl<T: Scalar> BatchRecon<T> {
    pub fn total(&self) -> T {
        self.forward + self.backward + self.global
    }

    pub fn mean(&self) -> T {
        self.total() / T::of(self.per_video.len() as f64)
    }
}

pub fn batch_recon_values<T: Scalar>(
    videos: &[&Matrix<T>],
    fwd: &[Matrix<T>],
    bwd: &[Matrix<T>],
    glob: &Matrix<T>,
) -> Result<BatchRecon<T>> {
    let b = videos.len();
    let m = videos.first().map_or(0, |v| v.rows());
    if fwd.len() != m || bwd.len() != m || glob.rows() != b {
        return Err(Error::shape(
            "batch_recon_values",
            "decoder outputs do not cover the batch".to_string(),
        ));
    }
    let mut per_video = vec![T::zero(); b];
    let mut forward = T::zero();
    let mut backward = T::zero();
    let mut global = T::zero();
    for (r, video) in videos.iter().enumerate() {
        let mut f_acc = T::zero();
        let mut b_acc = T::zero();
        for t in 0..m {
            for c in 0..video.cols() {
                let df = fwd[t][(r, c)] - video[(t, c)];
                let db = bwd[t][(r, c)] - video[(t, c)];
                f_acc += df * df;
                b_acc += db * db;
            }
        }
        let target = mean_frame(video);
        let mut g_acc = T::zero();
        for c in 0..video.cols() {
            let dg = glob[(r, c)] - target[c];
            g_acc += dg * dg;
        }
        per_video[r] = f_acc + b_acc + g_acc;
        forward += f_acc;
        backward += b_acc;
        global += g_acc;
    }
    Ok(BatchRecon { per_video, forward, backward, global })
}
