//! Hierarchical binary recurrent auto-encoder.
//!
//! A two-layer encoder turns an M×D frame sequence into a short binary
//! code; three decoders (forward, time-reversed, global) reconstruct the
//! sequence from that code, and the squared reconstruction error is the
//! self-supervision signal. [`run_batch`] and [`model_backward`] wire the
//! pieces together for training; [`encoder::encode_one`] is the inference
//! entry point.

pub mod decoder;
pub mod encoder;
pub mod loss;
pub mod model;
pub mod params;

pub use decoder::{
    decode_global, decode_global_backward, decode_sequence, decode_sequence_backward, DecodeOut,
    DecodeTape, GlobalOut, GlobalTape,
};
pub use encoder::{encode_batch, encode_one, encoder_backward, EncodeBatch, EncoderTape};
pub use loss::{batch_recon_values, mean_frame, recon_loss, BatchRecon, ReconLoss};
pub use model::{model_backward, run_batch, BatchOutput};
pub use params::{DecoderParams, DecoderStack, EncoderParams, ModelDims, ModelParams};
