//! Checkpoint files.
//!
//! ```text
//! "VXCK" u32:version u64:meta_len meta_json payload
//! ```
//! `meta_json` carries the architecture, seed, epoch, head size and the
//! tensor index (name, shape, role) in payload order. The payload is every
//! tensor's values as little-endian f32, concatenated in index order.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::arch::ArchSpec;
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"VXCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Role {
    Param,
    Buffer,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    name: String,
    shape: Vec<usize>,
    role: Role,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    arch: ArchSpec,
    seed: u64,
    epoch: u32,
    head_classes: Option<usize>,
    tensors: Vec<IndexEntry>,
}

pub fn save_checkpoint(params: &ModelParams<f32>, path: &Path) -> Result<()> {
    let groups = [(Role::Param, params.tensors()), (Role::Buffer, params.buffers())];
    let index: Vec<IndexEntry> = groups
        .iter()
        .flat_map(|(role, m)| {
            m.iter().map(|(k, t)| IndexEntry {
                name: k.clone(),
                shape: t.shape().to_vec(),
                role: *role,
            })
        })
        .collect();
    let meta = serde_json::to_vec(&Meta {
        arch: params.arch.clone(),
        seed: params.seed,
        epoch: params.epoch,
        head_classes: params.head_classes(),
        tensors: index,
    })?;
    let payload: usize = groups.iter().flat_map(|(_, m)| m.values()).map(Tensor::len).sum();
    let mut buf = Vec::with_capacity(16 + meta.len() + 4 * payload);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    buf.extend_from_slice(&meta);
    for (_, m) in &groups {
        for t in m.values() {
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams<f32>> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ctx = |m: String| format!("{}: {m}", path.display());
    if buf.len() < 16 || &buf[..4] != MAGIC {
        return Err(Error::Checkpoint(ctx("bad magic, not a checkpoint".into())));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(ctx(format!(
            "format version {version}, this build reads {CHECKPOINT_VERSION}"
        ))));
    }
    let meta_len = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
    let meta_end = 16usize
        .checked_add(meta_len)
        .filter(|&e| e <= buf.len())
        .ok_or_else(|| Error::Integrity(ctx("truncated metadata".into())))?;
    let meta: Meta = serde_json::from_slice(&buf[16..meta_end])
        .map_err(|e| Error::Integrity(ctx(format!("metadata: {e}"))))?;
    let expected: usize = meta.tensors.iter().map(|e| e.shape.iter().product::<usize>()).sum();
    let payload = &buf[meta_end..];
    if payload.len() != 4 * expected {
        return Err(Error::Integrity(ctx(format!(
            "payload holds {} bytes, index describes {}",
            payload.len(),
            4 * expected
        ))));
    }
    let mut tensors = BTreeMap::new();
    let mut buffers = BTreeMap::new();
    let mut floats = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()));
    for e in meta.tensors {
        let n = e.shape.iter().product();
        let t = Tensor::from_vec(&e.shape, floats.by_ref().take(n).collect())?;
        let dst = match e.role {
            Role::Param => &mut tensors,
            Role::Buffer => &mut buffers,
        };
        if dst.insert(e.name.clone(), t).is_some() {
            return Err(Error::Integrity(ctx(format!("tensor {} listed twice", e.name))));
        }
    }
    ModelParams::from_parts(meta.arch, meta.seed, meta.epoch, tensors, buffers, meta.head_classes)
        .map_err(|e| match e {
            Error::Integrity(m) => Error::Integrity(ctx(m)),
            other => other,
        })
}

/// [`load_checkpoint`], then insists the stored architecture equals `arch`.
pub fn load_checkpoint_for(path: &Path, arch: &ArchSpec) -> Result<ModelParams<f32>> {
    let m = load_checkpoint(path)?;
    if &m.arch != arch {
        return Err(Error::ArchMismatch {
            expected: arch.name.clone(),
            found: m.arch.name.clone(),
        });
    }
    Ok(m)
}
