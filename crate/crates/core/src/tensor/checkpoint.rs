//! Single-file parameter checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! "SMCK" | version u16 | header_len u32 | header JSON
//! | param_count u64 | blob_count u32
//! | per blob: name_len u16 | name | kind u8 | rank u8 | dims u32 x rank | f32 values
//! ```

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::util::write_atomic;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SMCK";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlobKind {
    /// Trainable; counted in `param_count`.
    Parameter,
    /// State needed for inference but not trained (batchnorm running stats).
    Buffer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedBlob {
    pub name: String,
    pub kind: BlobKind,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: serde_json::Value,
    pub param_count: u64,
    pub blobs: Vec<NamedBlob>,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let header = serde_json::to_vec(&self.header)?;
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&self.param_count.to_le_bytes());
        out.extend_from_slice(&(self.blobs.len() as u32).to_le_bytes());
        for blob in &self.blobs {
            let expected: usize = blob.shape.iter().product();
            if expected != blob.values.len() {
                return Err(format_err(format!(
                    "blob `{}` has {} values for shape {:?}",
                    blob.name,
                    blob.values.len(),
                    blob.shape
                )));
            }
            let name = blob.name.as_bytes();
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name);
            out.push(match blob.kind {
                BlobKind::Parameter => 0,
                BlobKind::Buffer => 1,
            });
            out.push(blob.shape.len() as u8);
            for &d in &blob.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &blob.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(format_err("not a checkpoint (bad magic)"));
        }
        let version = u16::from_le_bytes(take(&mut r)?);
        if version != CHECKPOINT_VERSION {
            return Err(format_err(format!("unsupported checkpoint version {version}")));
        }
        let header_len = u32::from_le_bytes(take(&mut r)?) as usize;
        let mut header = vec![0u8; header_len];
        read_exact(&mut r, &mut header)?;
        let header = serde_json::from_slice(&header)?;
        let param_count = u64::from_le_bytes(take(&mut r)?);
        let blob_count = u32::from_le_bytes(take(&mut r)?) as usize;
        let mut blobs = Vec::with_capacity(blob_count);
        for _ in 0..blob_count {
            let name_len = u16::from_le_bytes(take(&mut r)?) as usize;
            let mut name = vec![0u8; name_len];
            read_exact(&mut r, &mut name)?;
            let name = String::from_utf8(name).map_err(|_| format_err("blob name is not UTF-8"))?;
            let [kind, rank] = take::<2>(&mut r)?;
            let kind = match kind {
                0 => BlobKind::Parameter,
                1 => BlobKind::Buffer,
                other => return Err(format_err(format!("unknown blob kind {other}"))),
            };
            let shape = (0..rank)
                .map(|_| take(&mut r).map(|b| u32::from_le_bytes(b) as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            if r.len() < n * 4 {
                return Err(format_err(format!("blob `{name}` truncated")));
            }
            let (data, rest) = r.split_at(n * 4);
            let values = data
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            r = rest;
            blobs.push(NamedBlob {
                name,
                kind,
                shape,
                values,
            });
        }
        if !r.is_empty() {
            return Err(format_err("trailing bytes after last blob"));
        }
        Ok(Self {
            header,
            param_count,
            blobs,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn blob(&self, name: &str) -> Option<&NamedBlob> {
        self.blobs.iter().find(|b| b.name == name)
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| format_err("checkpoint truncated"))
}

fn take<const N: usize>(r: &mut &[u8]) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf)?;
    Ok(buf)
}
