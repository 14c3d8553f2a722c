//! Flat binary container of named `f32` tensors plus string metadata.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "TSGCKPT\0"
//! version    u32      FORMAT_VERSION
//! n_meta     u32      then n_meta × (u32 len, key utf-8, u32 len, value utf-8)
//! n_tensors  u32      then n_tensors × (u32 len, name utf-8, u32 ndim,
//!                                       ndim × u64 dim, numel × f32 payload)
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"TSGCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub metadata: BTreeMap<String, String>,
    pub tensors: IndexMap<String, Tensor<f32>>,
}

fn bad(msg: impl Into<String>) -> TensorError {
    TensorError::UnsupportedCheckpoint(msg.into())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => bad(format!("truncated while reading {what}")),
        _ => TensorError::Io(e),
    })
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_string(r: &mut impl Read, what: &str) -> Result<String> {
    let len = read_u32(r, what)? as usize;
    if len > 1 << 20 {
        return Err(bad(format!("{what} length {len} is implausible")));
    }
    let mut b = vec![0u8; len];
    read_exact(r, &mut b, what)?;
    String::from_utf8(b).map_err(|_| bad(format!("{what} is not utf-8")))
}

fn write_string(w: &mut impl Write, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_tensor<T: Scalar>(&mut self, name: impl Into<String>, t: &Tensor<T>) {
        let mut t = t.cast::<f32>();
        t.grad = None;
        t.requires_grad = false;
        self.tensors.insert(name.into(), t);
    }

    pub fn insert_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        self.metadata.insert(key.into(), value.to_string());
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor<f32>> {
        self.tensors.get(name).ok_or_else(|| bad(format!("missing tensor {name}")))
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.metadata.get(key).map(String::as_str).ok_or_else(|| bad(format!("missing metadata {key}")))
    }

    pub fn meta_parse<V: std::str::FromStr>(&self, key: &str) -> Result<V> {
        self.meta(key)?.parse().map_err(|_| bad(format!("metadata {key} does not parse")))
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.metadata.len() as u32).to_le_bytes())?;
        for (k, v) in &self.metadata {
            write_string(w, k)?;
            write_string(w, v)?;
        }
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &self.tensors {
            write_string(w, name)?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            let mut payload = Vec::with_capacity(t.len() * 4);
            for v in t.data() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&payload)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(r, &mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let version = read_u32(r, "version")?;
        if version != FORMAT_VERSION {
            return Err(bad(format!("format version {version}, expected {FORMAT_VERSION}")));
        }
        let mut ck = Checkpoint::new();
        for _ in 0..read_u32(r, "metadata count")? {
            let k = read_string(r, "metadata key")?;
            let v = read_string(r, "metadata value")?;
            ck.metadata.insert(k, v);
        }
        for _ in 0..read_u32(r, "tensor count")? {
            let name = read_string(r, "tensor name")?;
            let ndim = read_u32(r, "rank")? as usize;
            if ndim == 0 || ndim > 8 {
                return Err(bad(format!("tensor {name} has rank {ndim}")));
            }
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                let mut b = [0u8; 8];
                read_exact(r, &mut b, "dimension")?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let numel = match numel {
                Some(n) if n > 0 && n < (1 << 32) => n,
                _ => return Err(bad(format!("tensor {name} has shape {shape:?}"))),
            };
            let mut payload = vec![0u8; numel * 4];
            read_exact(r, &mut payload, "payload")?;
            let data =
                payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            let t = Tensor::new(&shape, data).map_err(|e| bad(e.to_string()))?;
            ck.tensors.insert(name, t);
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }
}
