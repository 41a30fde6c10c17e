//! Binary weight files: magic `CGWT`, version, architecture digest and a
//! table of named little-endian `f32` tensors.

use std::io::Write;
use std::path::Path;

use super::model::{Model, ModelConfig, Param};
use super::NnError;
use crate::store::atomic_write_io;
use crate::Real;

const MAGIC: &[u8; 4] = b"CGWT";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightFile {
    pub digest: [u8; 32],
    pub tensors: Vec<Param<f32>>,
}

pub fn write_weights<T: Real, W: Write>(model: &Model<T>, mut out: W) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&model.config().digest())?;
    out.write_all(&(model.params().len() as u32).to_le_bytes())?;
    for p in model.params() {
        out.write_all(&(p.name.len() as u16).to_le_bytes())?;
        out.write_all(p.name.as_bytes())?;
        out.write_all(&[p.shape.len() as u8])?;
        for &d in &p.shape {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in &p.data {
            out.write_all(&v.to_f32_le())?;
        }
    }
    Ok(())
}

pub fn weights_bytes<T: Real>(model: &Model<T>) -> Vec<u8> {
    let mut buf = Vec::new();
    write_weights(model, &mut buf).expect("writing to memory");
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            NnError::FormatMismatch(format!("truncated at byte {} (need {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, NnError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("two bytes")))
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }
}

pub fn read_weights(bytes: &[u8]) -> Result<WeightFile, NnError> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(NnError::FormatMismatch("missing CGWT magic".into()));
    }
    let version = c.u16()?;
    if version != VERSION {
        return Err(NnError::FormatMismatch(format!("unsupported version {version}")));
    }
    let digest: [u8; 32] = c.take(32)?.try_into().expect("32 bytes");
    let count = c.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = c.u16()? as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| NnError::FormatMismatch("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = c.take(1)?[0] as usize;
        let shape = (0..rank).map(|_| c.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n.ok_or_else(|| NnError::FormatMismatch(format!("tensor {name} is too large")))?;
        let raw = c.take(n.checked_mul(4).ok_or_else(|| NnError::FormatMismatch(format!("tensor {name} is too large")))?)?;
        let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("four bytes"))).collect();
        tensors.push(Param { name, shape, data });
    }
    if c.pos != bytes.len() {
        return Err(NnError::FormatMismatch(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(WeightFile { digest, tensors })
}

fn read_file(path: &Path) -> Result<WeightFile, NnError> {
    let bytes = std::fs::read(path).map_err(|source| NnError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_weights(&bytes)
}

pub fn export_weights<T: Real>(model: &Model<T>, path: &Path) -> Result<(), NnError> {
    atomic_write_io(path, &weights_bytes(model)).map_err(|source| NnError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn cast<T: Real>(p: Param<f32>) -> Param<T> {
    Param {
        name: p.name,
        shape: p.shape,
        data: p.data.into_iter().map(|v| T::of(f64::from(v))).collect(),
    }
}

/// Load a full model; the file's architecture digest and shape table must match `config`.
pub fn import_weights<T: Real>(path: &Path, config: &ModelConfig) -> Result<Model<T>, NnError> {
    let file = read_file(path)?;
    if file.digest != config.digest() {
        return Err(NnError::FormatMismatch(format!(
            "file was written for a different architecture than {}",
            config.architecture()
        )));
    }
    Model::from_parts(config.clone(), file.tensors.into_iter().map(cast).collect())
}

/// Overwrite the encoder convolutions of `model` with the matching `enc.*`
/// tensors of a weight file, ignoring the digest and every other tensor.
/// Returns the names of the loaded tensors.
pub fn import_encoder_weights<T: Real>(model: &mut Model<T>, path: &Path) -> Result<Vec<String>, NnError> {
    let file = read_file(path)?;
    let mut loaded = Vec::new();
    for t in file.tensors.into_iter().filter(|t| t.name.starts_with("enc.")) {
        let dst = model
            .params_mut()
            .iter_mut()
            .find(|p| p.name == t.name)
            .ok_or_else(|| NnError::FormatMismatch(format!("model has no tensor {}", t.name)))?;
        if dst.shape != t.shape {
            return Err(NnError::FormatMismatch(format!(
                "tensor {} has shape {:?}, model expects {:?}",
                t.name, t.shape, dst.shape
            )));
        }
        let name = t.name.clone();
        *dst = cast(t);
        loaded.push(name);
    }
    if loaded.is_empty() {
        return Err(NnError::FormatMismatch("file contains no encoder tensors".into()));
    }
    Ok(loaded)
}
