//! Packed binary codes and Hamming distance.
//!
//! A code is L symbols over {−1,+1}, stored as ⌈L/8⌉ bytes: symbol k maps
//! to bit k mod 8 of byte k/8 (least-significant bit first), +1 → 1 and
//! −1 → 0. Padding bits beyond L are kept zero so equal codes are equal
//! bytes and XOR+popcount counts exactly the symbol mismatches.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryCode {
    len: usize,
    bytes: Vec<u8>,
}

impl BinaryCode {
    /// Pack a ±1 symbol slice. Anything but exactly ±1 is rejected — codes
    /// come from sgn, which never emits zero.
    pub fn from_signs<T: Scalar>(signs: &[T]) -> Result<Self> {
        if signs.is_empty() {
            return Err(Error::invalid("BinaryCode::from_signs", "empty code"));
        }
        let mut bytes = vec![0u8; signs.len().div_ceil(8)];
        for (k, &s) in signs.iter().enumerate() {
            if s == T::one() {
                bytes[k / 8] |= 1 << (k % 8);
            } else if s != -T::one() {
                return Err(Error::invalid(
                    "BinaryCode::from_signs",
                    format!("symbol {k} is {s}, expected ±1"),
                ));
            }
        }
        Ok(BinaryCode { len: signs.len(), bytes })
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::invalid("BinaryCode::from_bits", "empty code"));
        }
        let mut bytes = vec![0u8; bits.len().div_ceil(8)];
        for (k, &bit) in bits.iter().enumerate() {
            if bit {
                bytes[k / 8] |= 1 << (k % 8);
            }
        }
        Ok(BinaryCode { len: bits.len(), bytes })
    }

    /// Reconstruct from packed bytes, enforcing the canonical form (exact
    /// byte count, zero padding bits).
    pub fn from_bytes(len: usize, bytes: Vec<u8>) -> Result<Self> {
        if len == 0 {
            return Err(Error::invalid("BinaryCode::from_bytes", "empty code"));
        }
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::invalid(
                "BinaryCode::from_bytes",
                format!("{} bytes cannot hold exactly {len} bits", bytes.len()),
            ));
        }
        if !len.is_multiple_of(8) {
            let pad_mask = !0u8 << (len % 8);
            if bytes[bytes.len() - 1] & pad_mask != 0 {
                return Err(Error::invalid(
                    "BinaryCode::from_bytes",
                    "padding bits beyond the code length must be zero",
                ));
            }
        }
        Ok(BinaryCode { len, bytes })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn bit(&self, k: usize) -> bool {
        assert!(k < self.len, "bit index {k} out of range for length {}", self.len);
        self.bytes[k / 8] & (1 << (k % 8)) != 0
    }

    /// Unpack to ±1 symbols.
    pub fn to_signs<T: Scalar>(&self) -> Vec<T> {
        (0..self.len).map(|k| if self.bit(k) { T::one() } else { -T::one() }).collect()
    }
}

/// Number of symbol positions where two codes differ, via XOR + popcount
/// on the packed bytes.
pub fn hamming_distance(a: &BinaryCode, b: &BinaryCode) -> Result<u32> {
    if a.len != b.len {
        return Err(Error::shape(
            "hamming_distance",
            format!("code lengths {} and {}", a.len, b.len),
        ));
    }
    Ok(a.bytes.iter().zip(b.bytes.iter()).map(|(x, y)| (x ^ y).count_ones()).sum())
}
