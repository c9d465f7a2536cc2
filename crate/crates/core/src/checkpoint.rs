//! Self-describing binary container for parameter sets.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "NSRKCKPT"
//! version u32      currently 1
//! metas   u32      count, then per entry: u32 key len, key bytes (UTF-8),
//!                  u32 value len, value bytes (UTF-8)
//! entries u32      count, then per entry: u32 name len, name bytes,
//!                  u32 ndim, ndim x u64 dims, u64 element count,
//!                  raw f32 little-endian payload
//! ```
//!
//! Maps are ordered (BTreeMap) so identical contents always serialize to
//! identical bytes, and f32 payloads are stored raw, so a round trip is
//! bit-exact.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{CoreError, Result};

const MAGIC: &[u8; 8] = b"NSRKCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct TensorEntry {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub entries: BTreeMap<String, TensorEntry>,
}

impl Checkpoint {
    pub fn new() -> Checkpoint {
        Checkpoint::default()
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.meta.insert(key.into(), value.into());
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.get(key).map(String::as_str)
    }

    pub fn require_meta(&self, key: &str, path: &str) -> Result<&str> {
        self.meta(key).ok_or_else(|| CoreError::Checkpoint {
            path: path.to_string(),
            detail: format!("missing meta key '{key}'"),
        })
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.entries.insert(name.into(), TensorEntry { shape, data });
    }

    pub fn get(&self, name: &str) -> Option<&TensorEntry> {
        self.entries.get(name)
    }

    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            write_str(&mut out, k);
            write_str(&mut out, v);
        }
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, entry) in &self.entries {
            write_str(&mut out, name);
            out.extend_from_slice(&(entry.shape.len() as u32).to_le_bytes());
            for &d in &entry.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.extend_from_slice(&(entry.data.len() as u64).to_le_bytes());
            for &v in &entry.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn deserialize(bytes: &[u8], origin: &str) -> Result<Checkpoint> {
        let mut r = Reader {
            bytes,
            pos: 0,
            origin,
        };
        let magic = r.take(8)?;
        if magic != MAGIC {
            return Err(r.err("bad magic; not a checkpoint file"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(r.err(format!(
                "unsupported format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let mut ckpt = Checkpoint::new();
        let n_meta = r.u32()?;
        for _ in 0..n_meta {
            let k = r.string()?;
            let v = r.string()?;
            ckpt.meta.insert(k, v);
        }
        let n_entries = r.u32()?;
        for _ in 0..n_entries {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u64()? as usize);
            }
            let count = r.u64()? as usize;
            if shape.iter().product::<usize>() != count {
                return Err(r.err(format!(
                    "entry '{name}': shape {shape:?} does not match element count {count}"
                )));
            }
            let raw = r.take(count * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            ckpt.entries.insert(name, TensorEntry { shape, data });
        }
        if r.pos != bytes.len() {
            return Err(r.err("trailing bytes after checkpoint payload"));
        }
        Ok(ckpt)
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.serialize();
        let mut f = std::fs::File::create(path)
            .map_err(|e| CoreError::io(path.display().to_string(), e))?;
        f.write_all(&bytes)
            .map_err(|e| CoreError::io(path.display().to_string(), e))
    }

    pub fn read_from(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| CoreError::io(path.display().to_string(), e))?;
        Checkpoint::deserialize(&bytes, &path.display().to_string())
    }
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a str,
}

impl<'a> Reader<'a> {
    fn err(&self, detail: impl Into<String>) -> CoreError {
        CoreError::Checkpoint {
            path: self.origin.to_string(),
            detail: detail.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.err(format!(
                "truncated: need {n} bytes at offset {}, have {}",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes([
            b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7],
        ]))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.err("invalid UTF-8 in string field"))
    }
}
