//! Binary checkpoint container.
//!
//! ```text
//! magic   "IGCNCKPT" (8 bytes)
//! version u8 (= 1)
//! meta    u32 length + UTF-8 JSON
//! tensors u32 count, then per tensor: name, tensor body
//! optim   u32 count, then per optimizer: name, u64 step, u32 slots, slots × (m body, v body)
//!
//! name        = u32 length + UTF-8 bytes
//! tensor body = u8 dtype (0 = f32, 1 = f64), u32 rank, rank × u64 dims, little-endian values
//! ```
//! All integers are little-endian.

use std::fs;
use std::path::Path;

use super::{AdamState, Element, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"IGCNCKPT";
pub const CHECKPOINT_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub meta: String,
    pub tensors: Vec<(String, Tensor<T>)>,
    pub optimizers: Vec<(String, AdamState<T>)>,
}

impl<T: Element> Checkpoint<T> {
    pub fn new(meta: impl Into<String>) -> Self {
        Self { meta: meta.into(), tensors: Vec::new(), optimizers: Vec::new() }
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn optimizer(&self, name: &str) -> Option<&AdamState<T>> {
        self.optimizers.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.push(CHECKPOINT_VERSION);
        put_str(&mut out, &self.meta);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            put_str(&mut out, name);
            put_tensor(&mut out, t);
        }
        out.extend_from_slice(&(self.optimizers.len() as u32).to_le_bytes());
        for (name, st) in &self.optimizers {
            put_str(&mut out, name);
            out.extend_from_slice(&st.step.to_le_bytes());
            out.extend_from_slice(&(st.m.len() as u32).to_le_bytes());
            for (m, v) in st.m.iter().zip(&st.v) {
                put_tensor(&mut out, m);
                put_tensor(&mut out, v);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic header".into()));
        }
        let version = r.take(1)?[0];
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {version} (this build reads version {CHECKPOINT_VERSION})"
            )));
        }
        let meta = r.string()?;
        let n = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(n);
        for _ in 0..n {
            let name = r.string()?;
            tensors.push((name, r.tensor()?));
        }
        let n = r.u32()? as usize;
        let mut optimizers = Vec::with_capacity(n);
        for _ in 0..n {
            let name = r.string()?;
            let step = r.u64()?;
            let slots = r.u32()? as usize;
            let (mut m, mut v) = (Vec::with_capacity(slots), Vec::with_capacity(slots));
            for _ in 0..slots {
                m.push(r.tensor()?);
                v.push(r.tensor()?);
            }
            optimizers.push((name, AdamState { step, m, v }));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { meta, tensors, optimizers })
    }
}

pub fn save_checkpoint<T: Element>(path: &Path, ckpt: &Checkpoint<T>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    // Temp file then rename: a failed save leaves the previous file intact.
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, ckpt.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Element>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes).map_err(|e| Error::format(path, e))
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_tensor<T: Element>(out: &mut Vec<u8>, t: &Tensor<T>) {
    out.push(T::DTYPE);
    out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.extend_from_slice(&T::to_le_bytes_vec(t.data()));
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    fn tensor<T: Element>(&mut self) -> Result<Tensor<T>> {
        let dtype = self.take(1)?[0];
        if dtype != T::DTYPE {
            return Err(Error::Checkpoint(format!("dtype tag {dtype}, expected {}", T::DTYPE)));
        }
        let rank = self.u32()? as usize;
        let shape = (0..rank).map(|_| self.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let width = std::mem::size_of::<T>();
        let numel: usize = shape.iter().product();
        let raw = self.take(numel * width)?;
        Tensor::new(&shape, raw.chunks_exact(width).map(T::from_le_chunk).collect())
    }
}
