//! `DAFA` feature archive.
//!
//! Little-endian layout: magic `DAFA`, version `u32`, record count `u64`,
//! then per record: id length `u16`, UTF-8 id, rows `u32`, cols `u32`,
//! `rows * cols` row-major `f32` values, CRC32 of everything in the record
//! before it.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Seek, SeekFrom, Write};
use std::path::Path;

use super::{CorpusError, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const ARCHIVE_MAGIC: &[u8; 4] = b"DAFA";
pub const ARCHIVE_VERSION: u32 = 1;
const HEADER_LEN: u64 = 16;

fn encode_record<T: Scalar>(id: &str, m: &Matrix<T>) -> Result<Vec<u8>> {
    let id_len = u16::try_from(id.len()).map_err(|_| CorpusError::CorruptArchive(format!("id {id:?} too long")))?;
    let mut buf = Vec::with_capacity(14 + id.len() + 4 * m.as_slice().len());
    buf.extend_from_slice(&id_len.to_le_bytes());
    buf.extend_from_slice(id.as_bytes());
    buf.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    buf.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for &v in m.as_slice() {
        buf.extend_from_slice(&v.to_f32_le());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

/// Streams records to disk; the header count is patched on [`finish`](Self::finish).
pub struct ArchiveWriter {
    out: BufWriter<File>,
    ids: HashSet<String>,
    count: u64,
}

impl ArchiveWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(ARCHIVE_MAGIC)?;
        out.write_all(&ARCHIVE_VERSION.to_le_bytes())?;
        out.write_all(&0u64.to_le_bytes())?;
        Ok(Self { out, ids: HashSet::new(), count: 0 })
    }

    pub fn push<T: Scalar>(&mut self, id: &str, m: &Matrix<T>) -> Result<()> {
        if !self.ids.insert(id.to_string()) {
            return Err(CorpusError::DuplicateId(id.to_string()));
        }
        self.out.write_all(&encode_record(id, m)?)?;
        self.count += 1;
        Ok(())
    }

    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Writes the final record count and flushes. Returns the count.
    pub fn finish(mut self) -> Result<u64> {
        self.out.seek(SeekFrom::Start(8))?;
        self.out.write_all(&self.count.to_le_bytes())?;
        self.out.seek(SeekFrom::Start(HEADER_LEN))?;
        self.out.flush()?;
        Ok(self.count)
    }
}

pub fn write_archive<T: Scalar>(path: impl AsRef<Path>, features: &BTreeMap<String, Matrix<T>>) -> Result<()> {
    let mut w = ArchiveWriter::create(path)?;
    for (id, m) in features {
        w.push(id, m)?;
    }
    w.finish()?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end =
            self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
                CorpusError::CorruptArchive(format!("truncated at byte {} (needed {n} more)", self.pos))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses archive bytes, keeping record order.
pub fn decode_archive(bytes: &[u8]) -> Result<Vec<(String, Matrix<f32>)>> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4)? != ARCHIVE_MAGIC {
        return Err(CorpusError::CorruptArchive("bad magic".into()));
    }
    let version = c.u32()?;
    if version != ARCHIVE_VERSION {
        return Err(CorpusError::CorruptArchive(format!("unsupported version {version}")));
    }
    let count = c.u64()?;
    let mut ids = HashSet::new();
    let mut out = Vec::new();
    for _ in 0..count {
        let start = c.pos;
        let id_len = c.u16()? as usize;
        let id = std::str::from_utf8(c.take(id_len)?)
            .map_err(|_| CorpusError::CorruptArchive("id is not UTF-8".into()))?
            .to_string();
        let rows = c.u32()? as usize;
        let cols = c.u32()? as usize;
        let n = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| CorpusError::CorruptArchive("shape overflow".into()))?;
        let payload = c.take(n)?;
        let body_end = c.pos;
        let crc = c.u32()?;
        if crc != crc32fast::hash(&bytes[start..body_end]) {
            return Err(CorpusError::CorruptArchive(format!("checksum mismatch in record {id:?}")));
        }
        if !ids.insert(id.clone()) {
            return Err(CorpusError::DuplicateId(id));
        }
        let data = payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        out.push((id, Matrix::from_vec(rows, cols, data)));
    }
    if c.pos != bytes.len() {
        return Err(CorpusError::CorruptArchive(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(out)
}

pub fn read_archive_records(path: impl AsRef<Path>) -> Result<Vec<(String, Matrix<f32>)>> {
    decode_archive(&std::fs::read(path)?)
}

pub fn read_archive(path: impl AsRef<Path>) -> Result<BTreeMap<String, Matrix<f32>>> {
    Ok(read_archive_records(path)?.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> BTreeMap<String, Matrix<f32>> {
        let mut m = BTreeMap::new();
        m.insert("a".to_string(), Matrix::from_fn(3, 5, |i, j| (i * 7 + j) as f32 * 0.37 - 1.0));
        m.insert("bé".to_string(), Matrix::from_vec(1, 2, vec![f32::MIN_POSITIVE, -0.0]));
        m.insert("empty".to_string(), Matrix::zeros(4, 0));
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.dafa");
        let m = sample();
        write_archive(&p, &m).unwrap();
        let back = read_archive(&p).unwrap();
        assert_eq!(back.len(), m.len());
        for (k, v) in &m {
            let b = &back[k];
            assert_eq!(b.shape(), v.shape());
            assert!(b.as_slice().iter().zip(v.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn empty_archive_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.dafa");
        write_archive::<f32>(&p, &BTreeMap::new()).unwrap();
        assert!(read_archive(&p).unwrap().is_empty());
    }

    #[test]
    fn every_truncation_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.dafa");
        write_archive(&p, &sample()).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        for cut in 0..bytes.len() {
            assert!(matches!(decode_archive(&bytes[..cut]), Err(CorpusError::CorruptArchive(_))), "cut {cut}");
        }
        let mut flipped = bytes.clone();
        flipped[30] ^= 0x10;
        assert!(matches!(decode_archive(&flipped), Err(CorpusError::CorruptArchive(_))));
        let mut extra = bytes;
        extra.push(0);
        assert!(matches!(decode_archive(&extra), Err(CorpusError::CorruptArchive(_))));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArchiveWriter::create(dir.path().join("d.dafa")).unwrap();
        w.push("x", &Matrix::<f64>::zeros(1, 1)).unwrap();
        assert!(matches!(w.push("x", &Matrix::<f64>::zeros(1, 1)), Err(CorpusError::DuplicateId(_))));
    }
}
