//! Minimal binary tensor container used for datasets and model checkpoints.
//!
//! ```text
//! magic "CWTF" | version u16 | count u32
//! per tensor: name_len u16 | name (utf-8) | dtype u8 | rank u8 | dims u64 * rank | values
//! ```
//!
//! Everything is little-endian. Dtype codes: 1 = f32, 2 = f64, 3 = i64.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::TensorIoError;

pub const MAGIC: [u8; 4] = *b"CWTF";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    I64(Vec<i64>),
}

impl TensorData {
    pub fn dtype_code(&self) -> u8 {
        match self {
            TensorData::F32(_) => 1,
            TensorData::F64(_) => 2,
            TensorData::I64(_) => 3,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::I64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values widened to `f64`.
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
            TensorData::I64(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<u64>,
    pub data: TensorData,
}

impl Tensor {
    pub fn new(name: impl Into<String>, dims: Vec<u64>, data: TensorData) -> Self {
        Tensor {
            name: name.into(),
            dims,
            data,
        }
    }

    fn element_count(dims: &[u64]) -> Option<usize> {
        dims.iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d))
            .and_then(|n| usize::try_from(n).ok())
    }
}

pub fn encode_tensors(tensors: &[Tensor]) -> Result<Vec<u8>, TensorIoError> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let count = u32::try_from(tensors.len())
        .map_err(|_| TensorIoError::Format("too many tensors".into()))?;
    out.extend_from_slice(&count.to_le_bytes());
    for t in tensors {
        let name = t.name.as_bytes();
        let name_len = u16::try_from(name.len())
            .map_err(|_| TensorIoError::Format(format!("name `{}` too long", t.name)))?;
        if Tensor::element_count(&t.dims) != Some(t.data.len()) {
            return Err(TensorIoError::Format(format!(
                "tensor `{}`: dims {:?} do not match {} values",
                t.name,
                t.dims,
                t.data.len()
            )));
        }
        let rank =
            u8::try_from(t.dims.len()).map_err(|_| TensorIoError::Format("rank > 255".into()))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name);
        out.push(t.data.dtype_code());
        out.push(rank);
        for d in &t.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &t.data {
            TensorData::F32(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::I64(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TensorIoError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| TensorIoError::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, TensorIoError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, TensorIoError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, TensorIoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, TensorIoError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<Tensor>, TensorIoError> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(TensorIoError::Format("bad magic".into()));
    }
    let version = c.u16()?;
    if version != VERSION {
        return Err(TensorIoError::Format(format!(
            "unsupported version {version}"
        )));
    }
    let count = c.u32()?;
    let mut tensors = Vec::new();
    for _ in 0..count {
        let name_len = c.u16()? as usize;
        let name = std::str::from_utf8(c.take(name_len)?)
            .map_err(|_| TensorIoError::Format("tensor name is not utf-8".into()))?
            .to_string();
        let dtype = c.u8()?;
        let rank = c.u8()? as usize;
        let dims = (0..rank).map(|_| c.u64()).collect::<Result<Vec<_>, _>>()?;
        let n = Tensor::element_count(&dims)
            .ok_or_else(|| TensorIoError::Format(format!("tensor `{name}` is too large")))?;
        let width = match dtype {
            1 => 4,
            2 | 3 => 8,
            other => return Err(TensorIoError::Format(format!("unknown dtype code {other}"))),
        };
        let raw = c.take(
            n.checked_mul(width)
                .ok_or_else(|| TensorIoError::Format(format!("tensor `{name}` is too large")))?,
        )?;
        let data = match dtype {
            1 => TensorData::F32(
                raw.chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                    .collect(),
            ),
            2 => TensorData::F64(
                raw.chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                    .collect(),
            ),
            _ => TensorData::I64(
                raw.chunks_exact(8)
                    .map(|b| i64::from_le_bytes(b.try_into().unwrap()))
                    .collect(),
            ),
        };
        tensors.push(Tensor { name, dims, data });
    }
    if c.pos != bytes.len() {
        return Err(TensorIoError::Format(
            "trailing bytes after last tensor".into(),
        ));
    }
    Ok(tensors)
}

pub fn write_tensors(path: &Path, tensors: &[Tensor]) -> Result<(), TensorIoError> {
    let bytes = encode_tensors(tensors)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    Ok(())
}

pub fn read_tensors(path: &Path) -> Result<Vec<Tensor>, TensorIoError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_tensors(&bytes)
}

pub fn find<'a>(tensors: &'a [Tensor], name: &str) -> Result<&'a Tensor, TensorIoError> {
    tensors
        .iter()
        .find(|t| t.name == name)
        .ok_or_else(|| TensorIoError::Missing(name.to_string()))
}
