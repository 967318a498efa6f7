//! Tab-separated utterance manifests.
//!
//! ```text
//! utt_id	speaker_id	path	duration_s	timestamp
//! spk000_u00	spk000	wav/spk000/spk000_u00.wav	1.600	1600012345
//! ```
//! `path` is relative to the manifest's directory unless absolute;
//! `timestamp` (Unix seconds) may be empty.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

pub const HEADER: [&str; 5] = ["utt_id", "speaker_id", "path", "duration_s", "timestamp"];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UttRecord {
    pub utt_id: String,
    pub speaker_id: String,
    /// Resolved path (manifest directory joined with the stored path).
    pub path: PathBuf,
    pub duration_s: f64,
    pub timestamp: Option<i64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub records: Vec<UttRecord>,
}

/// Corpus summary in the usual `#spkr #utt #utt/spkr dur/utt` layout.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ManifestStats {
    pub speakers: usize,
    pub utts: usize,
    pub utts_per_speaker: f64,
    pub mean_duration_s: f64,
}

impl fmt::Display for ManifestStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "#spkr\t#utt\t#utt/spkr\tdur/utt")?;
        write!(
            f,
            "{}\t{}\t{}\t{:.2}s",
            self.speakers,
            self.utts,
            trim_float(self.utts_per_speaker),
            self.mean_duration_s
        )
    }
}

fn trim_float(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

impl Manifest {
    /// Builds a manifest from records, rejecting duplicate utterance ids.
    pub fn new(records: Vec<UttRecord>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for r in &records {
            if !seen.insert(r.utt_id.as_str()) {
                return Err(Error::Dataset(format!("duplicate utterance id {}", r.utt_id)));
            }
        }
        Ok(Self { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records grouped by speaker, speakers in sorted order, records in file order.
    pub fn by_speaker(&self) -> BTreeMap<&str, Vec<&UttRecord>> {
        let mut m: BTreeMap<&str, Vec<&UttRecord>> = BTreeMap::new();
        for r in &self.records {
            m.entry(r.speaker_id.as_str()).or_default().push(r);
        }
        m
    }

    pub fn speakers(&self) -> Vec<String> {
        self.by_speaker().keys().map(|s| s.to_string()).collect()
    }

    pub fn get(&self, utt_id: &str) -> Option<&UttRecord> {
        self.records.iter().find(|r| r.utt_id == utt_id)
    }

    /// Records whose speaker is in `speakers`, order preserved.
    pub fn with_speakers(&self, speakers: &BTreeSet<String>) -> Self {
        Self {
            records: self
                .records
                .iter()
                .filter(|r| speakers.contains(&r.speaker_id))
                .cloned()
                .collect(),
        }
    }

    pub fn stats(&self) -> ManifestStats {
        let speakers = self.by_speaker().len();
        let utts = self.records.len();
        let total: f64 = self.records.iter().map(|r| r.duration_s).sum();
        ManifestStats {
            speakers,
            utts,
            utts_per_speaker: if speakers == 0 { 0.0 } else { utts as f64 / speakers as f64 },
            mean_duration_s: if utts == 0 { 0.0 } else { total / utts as f64 },
        }
    }

    /// Writes the TSV, storing paths relative to the manifest directory when possible.
    pub fn write(&self, path: &Path) -> Result<()> {
        let dir = path.parent().unwrap_or(Path::new(""));
        let mut out = HEADER.join("\t");
        out.push('\n');
        for r in &self.records {
            let rel = r.path.strip_prefix(dir).unwrap_or(&r.path);
            let ts = r.timestamp.map(|t| t.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{}\t{}\t{}\t{:.3}\t{}\n",
                r.utt_id,
                r.speaker_id,
                rel.display(),
                r.duration_s,
                ts
            ));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Reads and validates a manifest: header, five fields per line, unique ids,
/// referenced files present.
pub fn parse_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let dir = path.parent().unwrap_or(Path::new(""));
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.split('\t').collect::<Vec<_>>() == HEADER => {}
        _ => return Err(err(1, format!("expected header {:?}", HEADER.join("\\t")))),
    }
    let mut records = Vec::new();
    let mut first_line: BTreeMap<String, usize> = BTreeMap::new();
    for (i, line) in lines {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(err(n, format!("expected 5 tab-separated fields, found {}", f.len())));
        }
        if f[0].is_empty() || f[1].is_empty() {
            return Err(err(n, "empty utterance or speaker id".into()));
        }
        if let Some(prev) = first_line.insert(f[0].to_string(), n) {
            return Err(err(n, format!("duplicate utterance id {} (first on line {prev})", f[0])));
        }
        let duration_s: f64 = f[3]
            .parse()
            .ok()
            .filter(|d: &f64| d.is_finite() && *d >= 0.0)
            .ok_or_else(|| err(n, format!("bad duration {:?}", f[3])))?;
        let timestamp = match f[4] {
            "" => None,
            t => Some(t.parse().map_err(|_| err(n, format!("bad timestamp {t:?}")))?),
        };
        let file = dir.join(f[2]);
        if !file.is_file() {
            return Err(err(n, format!("missing file {}", file.display())));
        }
        records.push(UttRecord {
            utt_id: f[0].into(),
            speaker_id: f[1].into(),
            path: file,
            duration_s,
            timestamp,
        });
    }
    Manifest::new(records)
}
