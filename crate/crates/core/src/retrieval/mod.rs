//! Hamming-space retrieval: packed ±1 codes, linear-scan ranking with
//! deterministic tie-breaks, and AP/mAP evaluation.

pub mod code;
pub mod db;
pub mod metrics;

pub use code::{hamming_distance, BinaryCode};
pub use db::{hash_dataset, read_codes, read_labels, write_codes, write_labels, RetrievalDB};
pub use metrics::{ap_at_k, map_at_k, map_table, MapReport, DEFAULT_K_TABLE};
