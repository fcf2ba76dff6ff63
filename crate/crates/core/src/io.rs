//! Shared plumbing for the on-disk binary formats: buffered open/create,
//! magic-string checks, and little-endian primitive reads with path context
//! on every error. Each format lives with the module that owns its data;
//! this is just the common substrate.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{ReadBytesExt, WriteBytesExt, LE};

use crate::error::{Error, Result};

pub(crate) const MAGIC_LEN: usize = 9;

pub(crate) fn open_reader(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}

pub(crate) fn create_writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

pub(crate) fn write_magic(w: &mut impl Write, path: &Path, magic: &[u8; MAGIC_LEN]) -> Result<()> {
    w.write_all(magic).map_err(|e| Error::io(path, e))
}

/// Read and verify a 9-byte magic string; a mismatch is a format error (the
/// file exists but is not what the caller thinks it is).
pub(crate) fn check_magic(r: &mut impl Read, path: &Path, magic: &[u8; MAGIC_LEN]) -> Result<()> {
    let mut buf = [0u8; MAGIC_LEN];
    r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
    if &buf != magic {
        return Err(Error::format(
            path,
            format!(
                "magic mismatch: expected {:?}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(&buf)
            ),
        ));
    }
    Ok(())
}

pub(crate) fn read_u8(r: &mut impl Read, path: &Path) -> Result<u8> {
    r.read_u8().map_err(|e| Error::io(path, e))
}

pub(crate) fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    r.read_u32::<LE>().map_err(|e| Error::io(path, e))
}

pub(crate) fn read_u64(r: &mut impl Read, path: &Path) -> Result<u64> {
    r.read_u64::<LE>().map_err(|e| Error::io(path, e))
}

pub(crate) fn read_f32(r: &mut impl Read, path: &Path) -> Result<f32> {
    r.read_f32::<LE>().map_err(|e| Error::io(path, e))
}

pub(crate) fn read_f64(r: &mut impl Read, path: &Path) -> Result<f64> {
    r.read_f64::<LE>().map_err(|e| Error::io(path, e))
}

pub(crate) fn write_u8(w: &mut impl Write, path: &Path, v: u8) -> Result<()> {
    w.write_u8(v).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_u32(w: &mut impl Write, path: &Path, v: u32) -> Result<()> {
    w.write_u32::<LE>(v).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_u64(w: &mut impl Write, path: &Path, v: u64) -> Result<()> {
    w.write_u64::<LE>(v).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_f32(w: &mut impl Write, path: &Path, v: f32) -> Result<()> {
    w.write_f32::<LE>(v).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_f64(w: &mut impl Write, path: &Path, v: f64) -> Result<()> {
    w.write_f64::<LE>(v).map_err(|e| Error::io(path, e))
}

/// Convert a u64 count read from a file into a usize, guarding 32-bit
/// hosts and absurd headers alike.
pub(crate) fn checked_len(v: u64, what: &str, path: &Path) -> Result<usize> {
    usize::try_from(v)
        .map_err(|_| Error::format(path, format!("{what} {v} does not fit in memory")))
}

/// Reinterpret an unexpected-EOF i/o error as a format error: the file ended
/// before its own header said it would, which is corruption, not bad luck.
pub(crate) fn truncation_as_format(e: Error, path: &Path, what: &str) -> Error {
    match e {
        Error::Io { ref source, .. } if source.kind() == std::io::ErrorKind::UnexpectedEof => {
            Error::format(path, format!("truncated while reading {what}"))
        }
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn magic_round_trip_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        let mut w = create_writer(&path).unwrap();
        write_magic(&mut w, &path, b"SSVH-FEAT").unwrap();
        write_u64(&mut w, &path, 7).unwrap();
        drop(w);

        let mut r = open_reader(&path).unwrap();
        check_magic(&mut r, &path, b"SSVH-FEAT").unwrap();
        assert_eq!(read_u64(&mut r, &path).unwrap(), 7);

        let mut r2 = open_reader(&path).unwrap();
        let err = check_magic(&mut r2, &path, b"SSVH-CODE").unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
    }

    #[test]
    fn truncated_file_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.bin");
        std::fs::write(&path, b"SS").unwrap();
        let mut r = open_reader(&path).unwrap();
        assert!(matches!(check_magic(&mut r, &path, b"SSVH-FEAT"), Err(Error::Io { .. })));
    }
}
