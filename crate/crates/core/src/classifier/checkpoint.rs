//! Little-endian parameter checkpoint.
//!
//! ```text
//! magic      b"SSTC"
//! version    u16 = 1
//! dim        u32
//! classes    u32
//! blocks     u32, then one u8 tag per block (0 attention, 1 ssm)
//! tensors    u32, then (rows u32, cols u32) per tensor
//! values     f32 per entry, tensors in declaration order, row-major
//! ```

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{BlockKind, ClassifierParams};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SSTC";
pub const VERSION: u16 = 1;

pub fn write_checkpoint<W: Write>(mut out: W, params: &ClassifierParams) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(params.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(params.classes() as u32).to_le_bytes());
    let pattern = params.pattern();
    buf.extend_from_slice(&(pattern.len() as u32).to_le_bytes());
    buf.extend(pattern.iter().map(|k| k.tag()));
    let tensors = params.tensors();
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in &tensors {
        buf.extend_from_slice(&(t.nrows() as u32).to_le_bytes());
        buf.extend_from_slice(&(t.ncols() as u32).to_le_bytes());
    }
    for t in &tensors {
        for &v in t.iter() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated at byte {} while reading {what}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<ClassifierParams> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u16::from_le_bytes(cur.take(2, "version")?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let dim = cur.u32("dim")?;
    let classes = cur.u32("classes")?;
    let block_count = cur.u32("block count")?;
    let pattern = cur
        .take(block_count, "block tags")?
        .iter()
        .map(|&t| BlockKind::from_tag(t).ok_or_else(|| Error::Checkpoint(format!("unknown block tag {t}"))))
        .collect::<Result<Vec<_>>>()?;
    let mut params = ClassifierParams::zeros(dim, classes, &pattern)
        .map_err(|e| Error::Checkpoint(format!("invalid header: {e}")))?;

    let tensor_count = cur.u32("tensor count")?;
    let expected: Vec<(usize, usize)> = params.tensors().iter().map(|t| t.dim()).collect();
    if tensor_count != expected.len() {
        return Err(Error::Checkpoint(format!("{tensor_count} tensors, layout needs {}", expected.len())));
    }
    for (i, &shape) in expected.iter().enumerate() {
        let got = (cur.u32("shape")?, cur.u32("shape")?);
        if got != shape {
            return Err(Error::Checkpoint(format!("tensor {i} is {got:?}, layout needs {shape:?}")));
        }
    }
    for t in params.tensors_mut() {
        let (r, c) = t.dim();
        let raw = cur.take(r * c * 4, "values")?;
        let values: Vec<f64> = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect();
        *t = Array2::from_shape_vec((r, c), values).expect("length matches shape");
    }
    if cur.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    Ok(params)
}

pub fn save(path: &Path, params: &ClassifierParams) -> Result<()> {
    write_checkpoint(std::io::BufWriter::new(std::fs::File::create(path)?), params)
}

pub fn load(path: &Path) -> Result<ClassifierParams> {
    read_checkpoint(std::fs::File::open(path)?)
}

/// Loads a checkpoint and checks it against the expected width, class count and pattern.
pub fn load_compatible(path: &Path, dim: usize, classes: usize, pattern: &[BlockKind]) -> Result<ClassifierParams> {
    let params = load(path)?;
    if params.dim() != dim || params.classes() != classes || params.pattern() != pattern {
        return Err(Error::Checkpoint(format!(
            "checkpoint is dim {} classes {} blocks {:?}, expected dim {dim} classes {classes} blocks {pattern:?}",
            params.dim(),
            params.classes(),
            params.pattern()
        )));
    }
    Ok(params)
}
