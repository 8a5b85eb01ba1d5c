//! Single-file binary formats for cubes, label maps and token features.
//!
//! Cube file, all integers little-endian:
//!
//! ```text
//! b"HSIC"  version u16 = 1  H u32  W u32  B u32  then H*W*B f32, row-major pixels, band fastest
//! ```
//!
//! Label file:
//!
//! ```text
//! b"HSIL"  version u16 = 1  H u32  W u32  C u16  then H*W u16 labels (0 = unlabeled, else 1..=C)
//! ```

use std::path::Path;

use ndarray::Array2;

use crate::cube::{HsiCube, LabelMap};
use crate::error::{Error, Result};

pub const CUBE_MAGIC: [u8; 4] = *b"HSIC";
pub const LABEL_MAGIC: [u8; 4] = *b"HSIL";
pub const FORMAT_VERSION: u16 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse { offset: self.pos as u64, message: message.into() })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let left = self.bytes.len() - self.pos;
        if left < n {
            return self.fail(format!("need {n} bytes for {what}, {left} left"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }

    fn header(&mut self, magic: [u8; 4]) -> Result<()> {
        if self.take(4, "magic")? != magic {
            self.pos = 0;
            return self.fail(format!("expected magic {:?}", String::from_utf8_lossy(&magic)));
        }
        let version = self.u16("version")?;
        if version != FORMAT_VERSION {
            self.pos -= 2;
            return self.fail(format!("unsupported version {version}"));
        }
        Ok(())
    }

    fn payload(&mut self, count: usize, width: usize) -> Result<&'a [u8]> {
        let need = count.checked_mul(width).filter(|&n| n <= self.bytes.len());
        let Some(need) = need else {
            return self.fail(format!("declared payload of {count} values does not fit in the file"));
        };
        let data = self.take(need, "payload")?;
        if self.pos != self.bytes.len() {
            return self.fail(format!("{} bytes after the declared payload", self.bytes.len() - self.pos));
        }
        Ok(data)
    }
}

fn float_payload(r: &mut Reader<'_>, count: usize) -> Result<Vec<f64>> {
    let start = r.pos;
    let data = r.payload(count, 4)?;
    data.chunks_exact(4)
        .enumerate()
        .map(|(i, b)| {
            let v = f32::from_le_bytes(b.try_into().unwrap());
            if v.is_finite() {
                Ok(v as f64)
            } else {
                Err(Error::Parse { offset: (start + 4 * i) as u64, message: format!("non-finite value {v}") })
            }
        })
        .collect()
}

pub fn decode_cube(bytes: &[u8]) -> Result<HsiCube> {
    let mut r = Reader::new(bytes);
    r.header(CUBE_MAGIC)?;
    let dims_at = r.pos;
    let (h, w, b) = (r.u32("height")?, r.u32("width")?, r.u32("bands")?);
    if h == 0 || w == 0 || b < 2 {
        r.pos = dims_at;
        return r.fail(format!("invalid cube size {h}x{w}x{b}"));
    }
    let count = h.checked_mul(w).and_then(|n| n.checked_mul(b)).unwrap_or(usize::MAX);
    let values = float_payload(&mut r, count)?;
    HsiCube::new(h, w, b, values)
}

pub fn encode_cube(cube: &HsiCube) -> Vec<u8> {
    encode_floats(cube.height(), cube.width(), cube.bands(), cube.values())
}

fn encode_floats(h: usize, w: usize, b: usize, values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(18 + 4 * values.len());
    out.extend_from_slice(&CUBE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for d in [h, w, b] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_labels(bytes: &[u8]) -> Result<LabelMap> {
    let mut r = Reader::new(bytes);
    r.header(LABEL_MAGIC)?;
    let dims_at = r.pos;
    let (h, w) = (r.u32("height")?, r.u32("width")?);
    let classes = r.u16("class count")? as usize;
    if h == 0 || w == 0 {
        r.pos = dims_at;
        return r.fail(format!("invalid label map size {h}x{w}"));
    }
    let start = r.pos;
    let data = r.payload(h.saturating_mul(w), 2)?;
    let mut labels = Vec::with_capacity(h * w);
    for (i, b) in data.chunks_exact(2).enumerate() {
        let v = u16::from_le_bytes([b[0], b[1]]);
        if v as usize > classes {
            return Err(Error::Parse {
                offset: (start + 2 * i) as u64,
                message: format!("label {v} exceeds class count {classes}"),
            });
        }
        labels.push(v);
    }
    LabelMap::new(h, w, classes, labels)
}

pub fn encode_labels(labels: &LabelMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 2 * labels.labels().len());
    out.extend_from_slice(&LABEL_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(labels.height() as u32).to_le_bytes());
    out.extend_from_slice(&(labels.width() as u32).to_le_bytes());
    out.extend_from_slice(&(labels.class_count() as u16).to_le_bytes());
    for &l in labels.labels() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out
}

/// Token features in the cube layout with `H = rows`, `W = 1`, `B = cols`.
pub fn encode_matrix(m: &Array2<f64>) -> Vec<u8> {
    let values: Vec<f64> = m.iter().copied().collect();
    encode_floats(m.nrows(), 1, m.ncols(), &values)
}

pub fn decode_matrix(bytes: &[u8]) -> Result<Array2<f64>> {
    let mut r = Reader::new(bytes);
    r.header(CUBE_MAGIC)?;
    let dims_at = r.pos;
    let (h, w, b) = (r.u32("rows")?, r.u32("width")?, r.u32("cols")?);
    if h == 0 || w != 1 || b == 0 {
        r.pos = dims_at;
        return r.fail(format!("expected an Mx1xC matrix file, got {h}x{w}x{b}"));
    }
    let values = float_payload(&mut r, h.saturating_mul(b))?;
    Ok(Array2::from_shape_vec((h, b), values).expect("length checked"))
}

pub fn read_cube(path: &Path) -> Result<HsiCube> {
    decode_cube(&std::fs::read(path)?)
}

pub fn write_cube(path: &Path, cube: &HsiCube) -> Result<()> {
    Ok(std::fs::write(path, encode_cube(cube))?)
}

pub fn read_labels(path: &Path) -> Result<LabelMap> {
    decode_labels(&std::fs::read(path)?)
}

pub fn write_labels(path: &Path, labels: &LabelMap) -> Result<()> {
    Ok(std::fs::write(path, encode_labels(labels))?)
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    decode_matrix(&std::fs::read(path)?)
}

pub fn write_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    Ok(std::fs::write(path, encode_matrix(m))?)
}
