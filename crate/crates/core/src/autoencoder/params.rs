//! Parameter containers for the full model, with uniform visitors used by
//! the optimizer (updates, clipping), the checkpoint writer, and the
//! flatten/unflatten plumbing the gradient checks rely on.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};
use crate::recurrent::{BlstmParams, LstmParams};
use crate::scalar::Scalar;

/// Static shape of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    /// Per-frame feature width D.
    pub input_dim: usize,
    /// Frames per sequence M.
    pub frames: usize,
    /// Temporal stride l between the two encoder layers.
    pub stride: usize,
    /// First-layer hidden size.
    pub h1: usize,
    /// Decoder second-layer hidden size.
    pub h2: usize,
    /// Code length L.
    pub code_len: usize,
    /// Steps the global decoder runs.
    pub global_steps: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0
            || self.frames == 0
            || self.h1 == 0
            || self.h2 == 0
            || self.code_len == 0
            || self.global_steps == 0
        {
            return Err(Error::invalid("ModelDims", "all dimensions must be positive"));
        }
        if self.stride == 0 {
            return Err(Error::invalid("ModelDims", "stride must be at least 1"));
        }
        if !self.frames.is_multiple_of(self.stride) {
            return Err(Error::invalid(
                "ModelDims",
                format!("frame count {} not divisible by stride {}", self.frames, self.stride),
            ));
        }
        Ok(())
    }

    pub fn encoder_steps(&self) -> usize {
        self.frames / self.stride
    }
}

/// Two-layer encoder: plain LSTM over every frame, binary LSTM over every
/// l-th first-layer output.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<T> {
    pub layer1: LstmParams<T>,
    pub layer2: BlstmParams<T>,
    pub stride: usize,
}

impl<T: Scalar> EncoderParams<T> {
    pub fn frames(&self) -> usize {
        self.layer2.steps() * self.stride
    }

    pub fn zeros_like(&self) -> Self {
        EncoderParams {
            layer1: self.layer1.zeros_like(),
            layer2: self.layer2.zeros_like(),
            stride: self.stride,
        }
    }

    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&str, &'a [T])) {
        self.layer1.visit(&mut |name, s| f(&format!("l1.{name}"), s));
        self.layer2.visit(&mut |name, s| f(&format!("l2.{name}"), s));
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&str, &mut [T])) {
        self.layer1.visit_mut(&mut |name, s| f(&format!("l1.{name}"), s));
        self.layer2.visit_mut(&mut |name, s| f(&format!("l2.{name}"), s));
    }
}

/// One decoder: recurrent-only first layer seeded by the code, full second
/// layer, affine projection head back to feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderStack<T> {
    pub l1: LstmParams<T>,
    pub l2: LstmParams<T>,
    pub head_w: Matrix<T>,
    pub head_b: Vector<T>,
}

impl<T: Scalar> DecoderStack<T> {
    pub fn zeros(code_len: usize, h2: usize, out_dim: usize) -> Self {
        DecoderStack {
            l1: LstmParams::zeros(0, code_len),
            l2: LstmParams::zeros(code_len, h2),
            head_w: Matrix::zeros(h2, out_dim),
            head_b: Vector::zeros(out_dim),
        }
    }

    pub fn init<R: Rng>(code_len: usize, h2: usize, out_dim: usize, rng: &mut R) -> Self {
        let mut s = Self::zeros(code_len, h2, out_dim);
        s.l1 = LstmParams::init(0, code_len, rng);
        s.l2 = LstmParams::init(code_len, h2, rng);
        s.head_w = crate::recurrent::uniform_matrix(h2, out_dim, rng);
        s
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.l1.hidden_dim(), self.l2.hidden_dim(), self.head_b.len())
    }

    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&str, &'a [T])) {
        self.l1.visit(&mut |name, s| f(&format!("l1.{name}"), s));
        self.l2.visit(&mut |name, s| f(&format!("l2.{name}"), s));
        f("head_w", self.head_w.data());
        f("head_b", self.head_b.as_slice());
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&str, &mut [T])) {
        self.l1.visit_mut(&mut |name, s| f(&format!("l1.{name}"), s));
        self.l2.visit_mut(&mut |name, s| f(&format!("l2.{name}"), s));
        f("head_w", self.head_w.data_mut());
        f("head_b", self.head_b.as_mut_slice());
    }
}

/// The three reconstruction decoders.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams<T> {
    pub forward: DecoderStack<T>,
    pub backward: DecoderStack<T>,
    pub global: DecoderStack<T>,
    pub global_steps: usize,
}

impl<T: Scalar> DecoderParams<T> {
    pub fn zeros_like(&self) -> Self {
        DecoderParams {
            forward: self.forward.zeros_like(),
            backward: self.backward.zeros_like(),
            global: self.global.zeros_like(),
            global_steps: self.global_steps,
        }
    }

    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&str, &'a [T])) {
        self.forward.visit(&mut |name, s| f(&format!("fwd.{name}"), s));
        self.backward.visit(&mut |name, s| f(&format!("bwd.{name}"), s));
        self.global.visit(&mut |name, s| f(&format!("glob.{name}"), s));
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&str, &mut [T])) {
        self.forward.visit_mut(&mut |name, s| f(&format!("fwd.{name}"), s));
        self.backward.visit_mut(&mut |name, s| f(&format!("bwd.{name}"), s));
        self.global.visit_mut(&mut |name, s| f(&format!("glob.{name}"), s));
    }
}

/// Everything learnable.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub encoder: EncoderParams<T>,
    pub decoder: DecoderParams<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// Fresh model: uniform ±1/√fan_in weights, forget biases 1, other
    /// biases 0, γ=1/β=0. The draw order is fixed, so a seed pins the model.
    pub fn init<R: Rng>(dims: &ModelDims, rng: &mut R) -> Result<Self> {
        dims.validate()?;
        let encoder = EncoderParams {
            layer1: LstmParams::init(dims.input_dim, dims.h1, rng),
            layer2: BlstmParams::init(dims.h1, dims.code_len, dims.encoder_steps(), rng),
            stride: dims.stride,
        };
        let decoder = DecoderParams {
            forward: DecoderStack::init(dims.code_len, dims.h2, dims.input_dim, rng),
            backward: DecoderStack::init(dims.code_len, dims.h2, dims.input_dim, rng),
            global: DecoderStack::init(dims.code_len, dims.h2, dims.input_dim, rng),
            global_steps: dims.global_steps,
        };
        Ok(ModelParams { encoder, decoder })
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            input_dim: self.encoder.layer1.input_dim(),
            frames: self.encoder.frames(),
            stride: self.encoder.stride,
            h1: self.encoder.layer1.hidden_dim(),
            h2: self.decoder.forward.l2.hidden_dim(),
            code_len: self.encoder.layer2.code_len(),
            global_steps: self.decoder.global_steps,
        }
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams { encoder: self.encoder.zeros_like(), decoder: self.decoder.zeros_like() }
    }

    /// Visit every learnable slice in a fixed order (prefix-named).
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&str, &'a [T])) {
        self.encoder.visit(&mut |name, s| f(&format!("enc.{name}"), s));
        self.decoder.visit(&mut |name, s| f(&format!("dec.{name}"), s));
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&str, &mut [T])) {
        self.encoder.visit_mut(&mut |name, s| f(&format!("enc.{name}"), s));
        self.decoder.visit_mut(&mut |name, s| f(&format!("dec.{name}"), s));
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, s| n += s.len());
        n
    }

    pub fn flatten(&self) -> Vec<T> {
        let mut flat = Vec::with_capacity(self.param_count());
        self.visit(&mut |_, s| flat.extend_from_slice(s));
        flat
    }

    pub fn unflatten_into(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::invalid(
                "ModelParams::unflatten_into",
                format!("expected {} values, got {}", self.param_count(), flat.len()),
            ));
        }
        let mut pos = 0;
        self.visit_mut(&mut |_, s| {
            s.copy_from_slice(&flat[pos..pos + s.len()]);
            pos += s.len();
        });
        Ok(())
    }

    /// √(Σ over every entry v²), in fixed visit order. Used as a gradient
    /// container method for global-norm clipping.
    pub fn global_norm(&self) -> T {
        let mut acc = T::zero();
        self.visit(&mut |_, s| {
            for v in s {
                acc += *v * *v;
            }
        });
        acc.sqrt()
    }

    pub fn scale_all(&mut self, alpha: T) {
        self.visit_mut(&mut |_, s| {
            for v in s.iter_mut() {
                *v *= alpha;
            }
        });
    }

    /// self += alpha · other, matching structures entry for entry.
    pub fn add_scaled_params(&mut self, alpha: T, other: &Self) {
        let mut slices: Vec<&[T]> = Vec::new();
        other.visit(&mut |_, s| slices.push(s));
        let mut idx = 0;
        self.visit_mut(&mut |name, s| {
            let src = slices[idx];
            assert_eq!(s.len(), src.len(), "parameter layout mismatch at {name}");
            for (a, b) in s.iter_mut().zip(src.iter()) {
                *a += alpha * *b;
            }
            idx += 1;
        });
        assert_eq!(idx, slices.len(), "parameter layout mismatch");
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, s| {
            if ok && s.iter().any(|v| !v.is_finite()) {
                ok = false;
            }
        });
        ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn dims() -> ModelDims {
        ModelDims { input_dim: 3, frames: 4, stride: 2, h1: 4, h2: 4, code_len: 4, global_steps: 1 }
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = ModelParams::<f64>::init(&dims(), &mut ChaCha20Rng::seed_from_u64(5)).unwrap();
        let b = ModelParams::<f64>::init(&dims(), &mut ChaCha20Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        let c = ModelParams::<f64>::init(&dims(), &mut ChaCha20Rng::seed_from_u64(6)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn forget_gate_bias_starts_at_one() {
        let p = ModelParams::<f64>::init(&dims(), &mut ChaCha20Rng::seed_from_u64(5)).unwrap();
        assert!(p.encoder.layer1.b_f.iter().all(|&v| v == 1.0));
        assert!(p.encoder.layer2.b_f.iter().all(|&v| v == 1.0));
        assert!(p.encoder.layer1.b_i.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flatten_round_trips() {
        let p = ModelParams::<f64>::init(&dims(), &mut ChaCha20Rng::seed_from_u64(9)).unwrap();
        let flat = p.flatten();
        assert_eq!(flat.len(), p.param_count());
        // Scramble every learnable slice, then restore; non-learnable state
        // (running statistics) is untouched by both operations, so the
        // whole structure must round-trip.
        let mut q = p.clone();
        q.scale_all(0.0);
        assert_ne!(p, q);
        q.unflatten_into(&flat).unwrap();
        assert_eq!(p, q);

        let short = vec![0.0; flat.len() - 1];
        assert!(q.unflatten_into(&short).is_err());
    }

    #[test]
    fn dims_recoverable_from_params() {
        let d = dims();
        let p = ModelParams::<f64>::init(&d, &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
        assert_eq!(p.dims(), d);
    }

    #[test]
    fn invalid_dims_rejected() {
        let mut d = dims();
        d.frames = 5; // not divisible by stride 2
        assert!(ModelParams::<f64>::init(&d, &mut ChaCha20Rng::seed_from_u64(1)).is_err());
        let mut d2 = dims();
        d2.code_len = 0;
        assert!(ModelParams::<f64>::init(&d2, &mut ChaCha20Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn add_scaled_and_norm() {
        let p = ModelParams::<f64>::init(&dims(), &mut ChaCha20Rng::seed_from_u64(2)).unwrap();
        let mut q = p.zeros_like();
        assert_eq!(q.global_norm(), 0.0);
        q.add_scaled_params(2.0, &p);
        let twice: Vec<f64> = p.flatten().iter().map(|v| 2.0 * v).collect();
        assert_eq!(q.flatten(), twice);
        assert!((q.global_norm() - 2.0 * p.global_norm()).abs() < 1e-12);
    }
}
