//! Code database, Hamming ranking, and the codes/labels file formats.

use std::path::Path;

use crate::autoencoder::{encode_batch, ModelParams};
use crate::error::{Error, Result};
use crate::io;
use crate::numerics::{Matrix, Mode};
use crate::recurrent::Binarize;
use crate::scalar::Scalar;

use super::code::{hamming_distance, BinaryCode};

const CODES_MAGIC: &[u8; 9] = b"SSVH-CODE";
const CODES_VERSION: u32 = 1;
const LABELS_MAGIC: &[u8; 9] = b"SSVH-LABL";

/// Immutable store of uniform-length codes with optional category labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetrievalDB {
    codes: Vec<BinaryCode>,
    code_len: usize,
    labels: Option<Vec<u32>>,
}

impl RetrievalDB {
    pub fn new(codes: Vec<BinaryCode>, labels: Option<Vec<u32>>) -> Result<Self> {
        let first = codes.first().ok_or_else(|| Error::invalid("RetrievalDB", "no codes"))?;
        let code_len = first.len();
        if let Some(bad) = codes.iter().position(|c| c.len() != code_len) {
            return Err(Error::invalid(
                "RetrievalDB",
                format!("code {bad} has length {}, expected {code_len}", codes[bad].len()),
            ));
        }
        if let Some(l) = &labels {
            if l.len() != codes.len() {
                return Err(Error::invalid(
                    "RetrievalDB",
                    format!("{} labels for {} codes", l.len(), codes.len()),
                ));
            }
        }
        Ok(RetrievalDB { codes, code_len, labels })
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn code_len(&self) -> usize {
        self.code_len
    }

    pub fn code(&self, i: usize) -> &BinaryCode {
        &self.codes[i]
    }

    pub fn codes(&self) -> &[BinaryCode] {
        &self.codes
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    /// All database indices by ascending Hamming distance to the query,
    /// ties broken by ascending index; `exclude` drops one index (the
    /// query itself when querying the database with its own member).
    pub fn rank(&self, query: &BinaryCode, exclude: Option<usize>) -> Result<Vec<usize>> {
        if let Some(x) = exclude {
            if x >= self.codes.len() {
                return Err(Error::invalid(
                    "rank",
                    format!("exclude index {x} out of range for {} codes", self.codes.len()),
                ));
            }
        }
        let mut scored: Vec<(u32, usize)> = Vec::with_capacity(self.codes.len());
        for (i, code) in self.codes.iter().enumerate() {
            if exclude == Some(i) {
                continue;
            }
            scored.push((hamming_distance(query, code)?, i));
        }
        scored.sort_unstable();
        Ok(scored.into_iter().map(|(_, i)| i).collect())
    }
}

/// Encode every video with frozen statistics and pack the codes.
pub fn hash_dataset<T: Scalar>(
    params: &ModelParams<T>,
    videos: &[Matrix<T>],
    binarize: Binarize,
    labels: Option<Vec<u32>>,
) -> Result<RetrievalDB> {
    let refs: Vec<&Matrix<T>> = videos.iter().collect();
    let enc = encode_batch(&params.encoder, &refs, Mode::Infer, binarize, false)?;
    let codes = (0..videos.len())
        .map(|i| BinaryCode::from_signs(enc.codes.row(i)))
        .collect::<Result<Vec<_>>>()?;
    RetrievalDB::new(codes, labels)
}

/// Write codes: magic, version, count, code length, then packed records.
pub fn write_codes(codes: &[BinaryCode], path: &Path) -> Result<()> {
    let first = codes.first().ok_or_else(|| Error::invalid("write_codes", "no codes"))?;
    let code_len = first.len();
    if codes.iter().any(|c| c.len() != code_len) {
        return Err(Error::invalid("write_codes", "codes have mixed lengths"));
    }
    let mut w = io::create_writer(path)?;
    io::write_magic(&mut w, path, CODES_MAGIC)?;
    io::write_u32(&mut w, path, CODES_VERSION)?;
    io::write_u64(&mut w, path, codes.len() as u64)?;
    io::write_u64(&mut w, path, code_len as u64)?;
    for code in codes {
        use std::io::Write;
        w.write_all(code.bytes()).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn read_codes(path: &Path) -> Result<Vec<BinaryCode>> {
    let mut r = io::open_reader(path)?;
    io::check_magic(&mut r, path, CODES_MAGIC)?;
    let version = io::read_u32(&mut r, path)?;
    if version != CODES_VERSION {
        return Err(Error::format(path, format!("unsupported codes version {version}")));
    }
    let n = io::checked_len(io::read_u64(&mut r, path)?, "code count", path)?;
    let code_len = io::checked_len(io::read_u64(&mut r, path)?, "code length", path)?;
    if code_len == 0 || n == 0 {
        return Err(Error::format(path, "empty code table".to_string()));
    }
    let record = code_len.div_ceil(8);
    let mut codes = Vec::with_capacity(n);
    for i in 0..n {
        use std::io::Read;
        let mut bytes = vec![0u8; record];
        r.read_exact(&mut bytes).map_err(|e| Error::io(path, e))?;
        codes.push(
            BinaryCode::from_bytes(code_len, bytes)
                .map_err(|e| Error::format(path, format!("record {i}: {e}")))?,
        );
    }
    Ok(codes)
}

/// Write labels: magic, count, then 32-bit little-endian labels.
pub fn write_labels(labels: &[u32], path: &Path) -> Result<()> {
    let mut w = io::create_writer(path)?;
    io::write_magic(&mut w, path, LABELS_MAGIC)?;
    io::write_u64(&mut w, path, labels.len() as u64)?;
    for &label in labels {
        io::write_u32(&mut w, path, label)?;
    }
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Vec<u32>> {
    let mut r = io::open_reader(path)?;
    io::check_magic(&mut r, path, LABELS_MAGIC)?;
    let n = io::checked_len(io::read_u64(&mut r, path)?, "label count", path)?;
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        labels.push(io::read_u32(&mut r, path)?);
    }
    Ok(labels)
}
