//! Sequence hashing with a hierarchical binary recurrent auto-encoder.
//!
//! The pipeline: per-frame feature sequences are folded by a two-layer
//! recurrent encoder (plain LSTM feeding a binary-output LSTM on a temporal
//! stride) into short ±1 codes; three decoders (forward, backward, global)
//! reconstruct the input from the code, and a neighborhood graph built from
//! mean-pooled features supplies a pairwise similarity loss. Codes pack into
//! bit vectors for Hamming-distance retrieval, scored by mean average
//! precision.
//!
//! Everything numeric is generic over [`Scalar`] (`f32`/`f64`); training and
//! verification run in `f64` (see the aliases below), single precision
//! appears only in the on-disk feature format.

pub mod autoencoder;
pub mod datagen;
pub mod error;
pub(crate) mod io;
pub mod neighborhood;
pub mod numerics;
pub mod recurrent;
pub mod retrieval;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision aliases: the concrete types the trainer and CLI use.
pub type Mat64 = numerics::Matrix<f64>;
pub type Vector64 = numerics::Vector<f64>;
/// Single-precision aliases, matching the on-disk feature dtype.
pub type Mat32 = numerics::Matrix<f32>;
pub type Vector32 = numerics::Vector<f32>;
