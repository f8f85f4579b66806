//! Binary container, CSV export and content digests.
//!
//! Container layout (little endian): magic `DGLB`, `u32` version, `u8` kind, payload.

use std::fs::{self, File};
use std::io::{Read, Write};
use std::path::Path;

use faer::Mat;
use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

type C = Complex64;

pub const MAGIC: &[u8; 4] = b"DGLB";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Kind {
    DtN = 1,
    Field = 2,
    Matrix = 3,
}

impl Kind {
    fn from_u8(b: u8) -> Result<Self> {
        match b {
            1 => Ok(Kind::DtN),
            2 => Ok(Kind::Field),
            3 => Ok(Kind::Matrix),
            _ => Err(Error::Format(format!("unknown container kind {b}"))),
        }
    }
}

/// Little-endian payload writer.
#[derive(Default)]
pub struct Encoder {
    pub buf: Vec<u8>,
}

impl Encoder {
    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn complex(&mut self, v: C) -> &mut Self {
        self.f64(v.re).f64(v.im)
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.u64(b.len() as u64);
        self.buf.extend_from_slice(b);
        self
    }

    pub fn complex_vec(&mut self, v: &[C]) -> &mut Self {
        self.u64(v.len() as u64);
        for &x in v {
            self.complex(x);
        }
        self
    }

    pub fn f64_vec(&mut self, v: &[f64]) -> &mut Self {
        self.u64(v.len() as u64);
        for &x in v {
            self.f64(x);
        }
        self
    }

    pub fn matrix(&mut self, m: &Mat<C>) -> &mut Self {
        self.u64(m.nrows() as u64).u64(m.ncols() as u64);
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                self.complex(m[(i, j)]);
            }
        }
        self
    }
}

pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format("truncated payload".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn complex(&mut self) -> Result<C> {
        Ok(C::new(self.f64()?, self.f64()?))
    }

    fn len(&mut self, elem: usize) -> Result<usize> {
        let n = self.u64()? as usize;
        if n.saturating_mul(elem) > self.buf.len() - self.pos {
            return Err(Error::Format("length exceeds payload".into()));
        }
        Ok(n)
    }

    pub fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.len(1)?;
        self.take(n)
    }

    pub fn complex_vec(&mut self) -> Result<Vec<C>> {
        let n = self.len(16)?;
        (0..n).map(|_| self.complex()).collect()
    }

    pub fn f64_vec(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn matrix(&mut self) -> Result<Mat<C>> {
        let r = self.u64()? as usize;
        let c = self.u64()? as usize;
        if r.saturating_mul(c).saturating_mul(16) > self.buf.len() - self.pos {
            return Err(Error::Format("matrix exceeds payload".into()));
        }
        let mut m = Mat::<C>::zeros(r, c);
        for j in 0..c {
            for i in 0..r {
                m[(i, j)] = self.complex()?;
            }
        }
        Ok(m)
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(Error::Format(format!("{} trailing bytes", self.buf.len() - self.pos)))
        }
    }
}

pub fn encode_container(kind: Kind, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() + 9);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(kind as u8);
    out.extend_from_slice(payload);
    out
}

pub fn decode_container(bytes: &[u8], expected: Kind) -> Result<&[u8]> {
    if bytes.len() < 9 || &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let kind = Kind::from_u8(bytes[8])?;
    if kind != expected {
        return Err(Error::Format(format!("expected {expected:?}, found {kind:?}")));
    }
    Ok(&bytes[9..])
}

/// Writes atomically: temporary sibling file, then rename.
pub fn write_container(path: &Path, kind: Kind, payload: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(&encode_container(kind, payload))?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_container(path: &Path, expected: Kind) -> Result<Vec<u8>> {
    let mut bytes = vec![];
    File::open(path)?.read_to_end(&mut bytes)?;
    Ok(decode_container(&bytes, expected)?.to_vec())
}

/// SHA-256 of the canonical JSON text (object keys sorted).
pub fn digest(value: &serde_json::Value) -> String {
    let text = serde_json::to_string(value).expect("JSON values always serialize");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Writes a CSV table with a header row.
pub fn write_csv<R, S>(path: &Path, header: &[&str], rows: R) -> Result<()>
where
    R: IntoIterator<Item = Vec<S>>,
    S: AsRef<str>,
{
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|s| s.as_ref()))?;
    }
    w.flush()?;
    Ok(())
}

/// Nodal field as CSV: coordinates, real and imaginary part.
pub fn write_field_csv(path: &Path, points: &[[f64; 3]], dim: usize, u: &[C]) -> Result<()> {
    let mut header: Vec<&str> = ["x1", "x2", "x3"][..dim].to_vec();
    header.extend(["re", "im"]);
    let rows = points.iter().zip(u).map(|(p, v)| {
        let mut r: Vec<String> = p[..dim].iter().map(|x| format!("{x:.17e}")).collect();
        r.push(format!("{:.17e}", v.re));
        r.push(format!("{:.17e}", v.im));
        r
    });
    write_csv(path, &header, rows)
}
