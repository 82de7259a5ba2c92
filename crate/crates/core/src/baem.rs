//! Little-endian binary containers.
//!
//! `BAEM` layout (all integers little-endian):
//!
//! ```text
//! "BAEM" | u32 version=1 | u64 q | u64 n_v | u64 n_d | u32 s | u32 n_t
//! | q·n_v f64 (params, row-major) | q·n_d f64 (data, row-major)
//! ```
//!
//! A "matrix" file is the same container with one of the two payloads empty
//! (`n_d = 0` for black-box inputs, `n_v = 0` for black-box outputs).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const BAEM_MAGIC: [u8; 4] = *b"BAEM";
pub const BAEM_VERSION: u32 = 1;
/// Bytes before the first float: magic, version, q, n_v, n_d, sensors, times.
pub const BAEM_HEADER_LEN: usize = 4 + 4 + 8 * 3 + 4 * 2;

/// Raw contents of a BAEM file.
#[derive(Clone, Debug, PartialEq)]
pub struct BaemFile {
    pub sensors: u32,
    pub times: u32,
    pub params: DMatrix<f64>,
    pub data: DMatrix<f64>,
}

impl BaemFile {
    pub fn rows(&self) -> usize {
        self.params.nrows().max(self.data.nrows())
    }
}

pub fn write_baem(path: &Path, file: &BaemFile) -> Result<()> {
    let q = file.rows();
    let params_rows = if file.params.ncols() == 0 { q } else { file.params.nrows() };
    let data_rows = if file.data.ncols() == 0 { q } else { file.data.nrows() };
    if params_rows != q || data_rows != q {
        return Err(Error::dims("baem payload rows", q, format!("{params_rows}/{data_rows}")));
    }
    let mut w = ByteWriter::create(path)?;
    w.bytes(&BAEM_MAGIC)?;
    w.u32(BAEM_VERSION)?;
    w.u64(q as u64)?;
    w.u64(file.params.ncols() as u64)?;
    w.u64(file.data.ncols() as u64)?;
    w.u32(file.sensors)?;
    w.u32(file.times)?;
    w.matrix(&file.params)?;
    w.matrix(&file.data)?;
    w.finish()
}

pub fn read_baem(path: &Path) -> Result<BaemFile> {
    let mut r = ByteReader::open(path)?;
    let magic = r.array::<4>()?;
    if magic != BAEM_MAGIC {
        return Err(Error::format(Some(path), format!("bad magic {magic:?}, expected \"BAEM\"")));
    }
    let version = r.u32()?;
    if version != BAEM_VERSION {
        return Err(Error::format(Some(path), format!("unsupported version {version}")));
    }
    let q = r.len_u64()?;
    let n_v = r.len_u64()?;
    let n_d = r.len_u64()?;
    let sensors = r.u32()?;
    let times = r.u32()?;
    let expected = q
        .checked_mul(n_v + n_d)
        .and_then(|x| x.checked_mul(8))
        .ok_or_else(|| Error::format(Some(path), "declared shape overflows"))?;
    let remaining = r.remaining()?;
    if remaining != expected as u64 {
        return Err(Error::dims(
            "baem payload bytes (declared q, n_v, n_d)",
            expected,
            remaining,
        ));
    }
    let params = r.matrix(q, n_v, "params")?;
    let data = r.matrix(q, n_d, "data")?;
    Ok(BaemFile {
        sensors,
        times,
        params,
        data,
    })
}

/// Buffered little-endian writer that tags errors with the file path.
pub(crate) struct ByteWriter<'a> {
    path: &'a Path,
    inner: BufWriter<File>,
}

impl<'a> ByteWriter<'a> {
    pub fn create(path: &'a Path) -> Result<Self> {
        let f = File::create(path).map_err(|e| Error::io(Some(path), e))?;
        Ok(Self {
            path,
            inner: BufWriter::new(f),
        })
    }

    pub fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.inner.write_all(b).map_err(|e| Error::io(Some(self.path), e))
    }

    pub fn u8(&mut self, x: u8) -> Result<()> {
        self.bytes(&[x])
    }

    pub fn u32(&mut self, x: u32) -> Result<()> {
        self.bytes(&x.to_le_bytes())
    }

    pub fn u64(&mut self, x: u64) -> Result<()> {
        self.bytes(&x.to_le_bytes())
    }

    pub fn matrix(&mut self, m: &DMatrix<f64>) -> Result<()> {
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                self.bytes(&m[(r, c)].to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn vector(&mut self, v: &DVector<f64>) -> Result<()> {
        for x in v.iter() {
            self.bytes(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::io(Some(self.path), e))
    }
}

pub(crate) struct ByteReader<'a> {
    path: &'a Path,
    inner: BufReader<File>,
    len: u64,
    pos: u64,
}

impl<'a> ByteReader<'a> {
    pub fn open(path: &'a Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(Some(path), e))?;
        let len = f.metadata().map_err(|e| Error::io(Some(path), e))?.len();
        Ok(Self {
            path,
            inner: BufReader::new(f),
            len,
            pos: 0,
        })
    }

    pub fn remaining(&self) -> Result<u64> {
        Ok(self.len - self.pos)
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::format(Some(self.path), "truncated file")
            } else {
                Error::io(Some(self.path), e)
            }
        })?;
        self.pos += N as u64;
        Ok(buf)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn len_u64(&mut self) -> Result<usize> {
        let x = self.u64()?;
        usize::try_from(x).map_err(|_| Error::format(Some(self.path), "dimension too large"))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    pub fn matrix(&mut self, rows: usize, cols: usize, what: &'static str) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                let x = self.f64()?;
                if !x.is_finite() {
                    return Err(Error::NonFiniteValue { what, row: r, col: c });
                }
                m[(r, c)] = x;
            }
        }
        Ok(m)
    }

    pub fn vector(&mut self, len: usize, what: &'static str) -> Result<DVector<f64>> {
        Ok(DVector::from_column_slice(self.matrix(1, len, what)?.as_slice()))
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.pos != self.len {
            return Err(Error::format(
                Some(self.path),
                format!("{} trailing bytes", self.len - self.pos),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_forty_bytes() {
        assert_eq!(BAEM_HEADER_LEN, 40);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.baem");
        write_baem(
            &p,
            &BaemFile {
                sensors: 1,
                times: 1,
                params: DMatrix::from_row_slice(2, 1, &[1.0, 2.0]),
                data: DMatrix::from_row_slice(2, 1, &[3.0, 4.0]),
            },
        )
        .unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[0..4], &[0x42, 0x41, 0x45, 0x4D]);
        assert_eq!(bytes.len(), 40 + 4 * 8);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2);
    }

    #[test]
    fn bad_magic_and_version() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.baem");
        std::fs::write(&p, b"NOPE").unwrap();
        assert!(matches!(read_baem(&p), Err(Error::Format { .. })));
        let mut bytes = b"BAEM".to_vec();
        bytes.extend_from_slice(&7u32.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 32]);
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_baem(&p), Err(Error::Format { .. })));
    }
}
