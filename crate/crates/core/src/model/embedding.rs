//! Utterance embeddings: inference and export.
//!
//! Two interchangeable on-disk forms are supported. JSON lines hold one
//! `{"utt": .., "spk": .., "vec": [..]}` object per line. The binary form is
//!
//! ```text
//! "VXEM" u32:version u32:dim u32:count { u32:len utt u32:len spk f32[dim] }*
//! ```
//! with an empty `spk` meaning "unknown".

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::net::{batch_input, forward};
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::frontend::FeatureMatrix;
use crate::nn::{l2_normalize, Mode};

const MAGIC: &[u8; 4] = b"VXEM";
const VERSION: u32 = 1;
/// Allowed deviation of `|v|` from 1 when constructing an embedding.
pub const NORM_TOL: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeakerEmbedding {
    #[serde(rename = "utt")]
    pub utt_id: String,
    #[serde(rename = "spk", default, skip_serializing_if = "Option::is_none")]
    pub speaker_id: Option<String>,
    #[serde(rename = "vec")]
    vector: Vec<f32>,
}

impl SpeakerEmbedding {
    /// Wraps an already unit-norm vector.
    pub fn new(utt_id: impl Into<String>, speaker_id: Option<String>, vector: Vec<f32>) -> Result<Self> {
        let norm = vector.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::Contract(format!("embedding norm is {norm}, expected 1")));
        }
        Ok(Self {
            utt_id: utt_id.into(),
            speaker_id,
            vector,
        })
    }

    /// Length-normalizes `raw` first.
    pub fn normalized(utt_id: impl Into<String>, speaker_id: Option<String>, raw: &[f32]) -> Result<Self> {
        Self::new(utt_id, speaker_id, l2_normalize(raw)?)
    }

    pub fn vector(&self) -> &[f32] {
        &self.vector
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn norm(&self) -> f64 {
        self.vector.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt()
    }
}

/// Whole-utterance embedding with BN in inference mode.
pub fn forward_embed(params: &ModelParams<f32>, feat: &FeatureMatrix) -> Result<SpeakerEmbedding> {
    let x = batch_input(&[feat])?;
    let fw = forward(params, &x, Mode::Infer)?;
    SpeakerEmbedding::new(
        feat.utt_id.clone(),
        Some(feat.speaker_id.clone()),
        fw.embeddings.into_data(),
    )
}

/// [`forward_embed`] over many utterances in parallel, output in input order.
pub fn embed_all(params: &ModelParams<f32>, feats: &[FeatureMatrix]) -> Result<Vec<SpeakerEmbedding>> {
    feats.par_iter().map(|f| forward_embed(params, f)).collect()
}

pub fn write_embeddings_jsonl(path: &Path, embs: &[SpeakerEmbedding]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for e in embs {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n").map_err(|err| Error::io(path, err))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_embeddings_jsonl(path: &Path) -> Result<Vec<SpeakerEmbedding>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let e: SpeakerEmbedding = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        out.push(SpeakerEmbedding::new(e.utt_id, e.speaker_id, e.vector).map_err(|e| parse_err(e.to_string()))?);
    }
    Ok(out)
}

pub fn write_embeddings_bin(path: &Path, embs: &[SpeakerEmbedding]) -> Result<()> {
    let dim = embs.first().map_or(0, SpeakerEmbedding::dim);
    if embs.iter().any(|e| e.dim() != dim) {
        return Err(Error::dim("embedding export", "mixed embedding dimensions"));
    }
    let mut buf = Vec::with_capacity(16 + embs.len() * (dim * 4 + 32));
    buf.extend_from_slice(MAGIC);
    for v in [VERSION, dim as u32, embs.len() as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for e in embs {
        for s in [e.utt_id.as_str(), e.speaker_id.as_deref().unwrap_or("")] {
            buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
            buf.extend_from_slice(s.as_bytes());
        }
        for v in &e.vector {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Option<&[u8]> {
        let s = self.buf.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn string(&mut self) -> Option<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).ok()
    }
}

pub fn read_embeddings_bin(path: &Path) -> Result<Vec<SpeakerEmbedding>> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::Integrity(format!("{}: {m}", path.display()));
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(4) != Some(MAGIC) {
        return Err(bad("not an embedding file"));
    }
    if c.u32() != Some(VERSION) {
        return Err(bad("unsupported version"));
    }
    let dim = c.u32().ok_or_else(|| bad("truncated header"))? as usize;
    let count = c.u32().ok_or_else(|| bad("truncated header"))? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let utt = c.string().ok_or_else(|| bad("truncated record"))?;
        let spk = c.string().ok_or_else(|| bad("truncated record"))?;
        let raw = c.take(dim * 4).ok_or_else(|| bad("truncated record"))?;
        let v = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        out.push(SpeakerEmbedding::new(utt, (!spk.is_empty()).then_some(spk), v)?);
    }
    if c.pos != buf.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(out)
}

/// Reads either form, detected by the leading magic bytes.
pub fn read_embeddings(path: &Path) -> Result<Vec<SpeakerEmbedding>> {
    let mut head = [0u8; 4];
    let n = File::open(path)
        .and_then(|mut f| f.read(&mut head))
        .map_err(|e| Error::io(path, e))?;
    if n == 4 && &head == MAGIC {
        read_embeddings_bin(path)
    } else {
        read_embeddings_jsonl(path)
    }
}
