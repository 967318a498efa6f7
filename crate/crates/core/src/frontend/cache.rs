//! On-disk feature cache.
//!
//! ```text
//! file   := "VXFC" u32:version u32:dim u32:count record*
//! record := u32:len utf8:utt_id u32:len utf8:speaker_id u32:T f32[T*dim]
//! ```
//! All integers and floats little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::FeatureMatrix;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"VXFC";
const VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    put_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn get_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_str(r: &mut impl Read) -> std::io::Result<String> {
    let n = get_u32(r)? as usize;
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

pub fn write_feature_cache(path: &Path, feats: &[FeatureMatrix]) -> Result<()> {
    let dim = feats.first().map(|f| f.dim()).unwrap_or(super::NUM_MEL);
    if let Some(bad) = feats.iter().find(|f| f.dim() != dim) {
        return Err(Error::dim(
            "feature cache",
            format!("{} has dim {}, cache dim is {dim}", bad.utt_id, bad.dim()),
        ));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        put_u32(w, VERSION)?;
        put_u32(w, dim as u32)?;
        put_u32(w, feats.len() as u32)?;
        for f in feats {
            put_str(w, &f.utt_id)?;
            put_str(w, &f.speaker_id)?;
            put_u32(w, f.frames() as u32)?;
            for v in f.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()
    };
    write(&mut w).map_err(|e| Error::io(path, e))
}

pub fn read_feature_cache(path: &Path) -> Result<Vec<FeatureMatrix>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io = |e| Error::io(path, e);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::Integrity(format!("{}: not a feature cache", path.display())));
    }
    let version = get_u32(&mut r).map_err(io)?;
    if version != VERSION {
        return Err(Error::Integrity(format!("{}: cache version {version}", path.display())));
    }
    let dim = get_u32(&mut r).map_err(io)? as usize;
    let count = get_u32(&mut r).map_err(io)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let utt = get_str(&mut r).map_err(io)?;
        let spk = get_str(&mut r).map_err(io)?;
        let t = get_u32(&mut r).map_err(io)? as usize;
        let mut bytes = vec![0u8; t * dim * 4];
        r.read_exact(&mut bytes).map_err(io)?;
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        out.push(FeatureMatrix::new(utt, spk, 10.0, dim, data)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.feats");
        let feats = vec![
            FeatureMatrix::new("u1", "spkA", 10.0, 2, vec![1.0, -2.5, 3.25, 0.0]).unwrap(),
            FeatureMatrix::new("u2", "spkB", 10.0, 2, vec![f32::MIN_POSITIVE, 7.0]).unwrap(),
        ];
        write_feature_cache(&p, &feats).unwrap();
        assert_eq!(read_feature_cache(&p).unwrap(), feats);

        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(read_feature_cache(&p).is_err());
        std::fs::write(&p, b"nope").unwrap();
        assert!(matches!(read_feature_cache(&p), Err(Error::Integrity(_))));
    }
}
