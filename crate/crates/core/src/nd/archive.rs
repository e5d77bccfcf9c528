//! Binary container of named tensors plus string metadata.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "CLUEGTA\0"
//! version  u32      = 1
//! n_meta   u32,  then n_meta × (key: u32 len + utf8, value: u32 len + utf8)
//! n_tensor u32,  then n_tensor × (name: u32 len + utf8, rank: u32,
//!                                 dims: rank × u64, values: Π dims × f64 bits)
//! digest   32 bytes SHA-256 of everything above
//! ```
//!
//! Values are stored as raw IEEE-754 bit patterns, so a round trip is
//! bit-exact and re-encoding a decoded archive reproduces the same bytes.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const MAGIC: &[u8; 8] = b"CLUEGTA\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorArchive {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint(format!(
                "truncated archive: need {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("invalid utf-8 in archive".into()))
    }
}

impl TensorArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_meta(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.meta.push((key.into(), value.into()));
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require_meta(&self, key: &str) -> Result<&str> {
        self.meta(key)
            .ok_or_else(|| Error::Checkpoint(format!("missing metadata key {key:?}")))
    }

    pub fn push_tensor(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.push((name.into(), t));
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Adds every parameter of `store` under `prefix`.
    pub fn push_store(&mut self, prefix: &str, store: &ParamStore) {
        for (name, t) in store.iter() {
            self.push_tensor(format!("{prefix}{name}"), t.clone());
        }
    }

    /// Rebuilds a store from the tensors whose names start with `prefix`,
    /// preserving archive order.
    pub fn extract_store(&self, prefix: &str) -> Result<ParamStore> {
        let mut store = ParamStore::new();
        for (name, t) in &self.tensors {
            if let Some(rest) = name.strip_prefix(prefix) {
                store.add(rest, t.clone())?;
            }
        }
        Ok(store)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            put_str(&mut buf, k);
            put_str(&mut buf, v);
        }
        buf.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            put_str(&mut buf, name);
            buf.extend_from_slice(&2u32.to_le_bytes());
            buf.extend_from_slice(&(t.rows() as u64).to_le_bytes());
            buf.extend_from_slice(&(t.cols() as u64).to_le_bytes());
            for v in t.data() {
                buf.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + 32 {
            return Err(Error::Checkpoint("archive too short".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if body[..8] != MAGIC[..] {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let mut r = Reader { buf: body, pos: 8 };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        if Sha256::digest(body)[..] != digest[..] {
            return Err(Error::Checkpoint("digest mismatch (corrupt or truncated)".into()));
        }
        let mut out = TensorArchive::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let v = r.string()?;
            out.meta.push((k, v));
        }
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let rank = r.u32()?;
            if rank != 2 {
                return Err(Error::Checkpoint(format!("tensor {name}: rank {rank} != 2")));
            }
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::Checkpoint(format!("tensor {name}: shape overflow")))?;
            let raw = r.take(
                n.checked_mul(8)
                    .ok_or_else(|| Error::Checkpoint(format!("tensor {name}: shape overflow")))?,
            )?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().unwrap())))
                .collect();
            out.tensors.push((name, Tensor::from_vec(rows, cols, data)?));
        }
        if r.pos != body.len() {
            return Err(Error::Checkpoint("trailing bytes in archive".into()));
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}
