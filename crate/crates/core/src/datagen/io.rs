//! Corpus directory format.
//!
//! ```text
//! corpus/
//!   manifest.json        spec, prototypes, per-split video index
//!   videos/<id>.bin      one record per video
//! ```
//!
//! A record is the magic `MLOC1` followed by little-endian `u32` values
//! `T, d, C, n_intervals`, then `n_intervals` triples `(start, end_exclusive,
//! class)`, then `T·d` f32 appearance values and `T·d` f32 motion values,
//! both row-major.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusSpec, Interval, Prototypes, SyntheticVideo};
use crate::error::{Error, Result};
use crate::numcore::Tensor2;

pub const RECORD_MAGIC: &[u8; 5] = b"MLOC1";
const MANIFEST: &str = "manifest.json";
const VIDEO_DIR: &str = "videos";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    spec: CorpusSpec,
    prototypes: Prototypes,
    train: Vec<IndexEntry>,
    test: Vec<IndexEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    id: String,
    file: String,
    #[serde(default)]
    confounders: Vec<usize>,
}

pub fn save_corpus(dir: impl AsRef<Path>, corpus: &Corpus) -> Result<()> {
    let dir = dir.as_ref();
    let videos = dir.join(VIDEO_DIR);
    fs::create_dir_all(&videos).map_err(|e| Error::io(&videos, e))?;

    let index = |list: &[SyntheticVideo]| -> Result<Vec<IndexEntry>> {
        list.iter()
            .map(|v| {
                let file = format!("{VIDEO_DIR}/{}.bin", v.id);
                let path = dir.join(&file);
                fs::write(&path, encode_record(v)).map_err(|e| Error::io(&path, e))?;
                Ok(IndexEntry {
                    id: v.id.clone(),
                    file,
                    confounders: v.confounders.clone(),
                })
            })
            .collect()
    };
    let manifest = Manifest {
        format: String::from_utf8_lossy(RECORD_MAGIC).into_owned(),
        spec: corpus.spec,
        prototypes: corpus.prototypes.clone(),
        train: index(&corpus.train)?,
        test: index(&corpus.test)?,
    };
    let path = dir.join(MANIFEST);
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Corpus> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.clone(),
        location: format!("line {}, column {}", e.line(), e.column()),
        detail: e.to_string(),
    })?;

    let read = |entries: &[IndexEntry]| -> Result<Vec<SyntheticVideo>> {
        entries
            .iter()
            .map(|entry| {
                let path = dir.join(&entry.file);
                let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
                let mut video = decode_record(&bytes, &entry.id, &path)?;
                video.confounders = entry.confounders.clone();
                Ok(video)
            })
            .collect()
    };
    Ok(Corpus {
        spec: manifest.spec,
        prototypes: manifest.prototypes,
        train: read(&manifest.train)?,
        test: read(&manifest.test)?,
    })
}

pub(crate) fn encode_record(v: &SyntheticVideo) -> Vec<u8> {
    let (t, d) = v.motion.shape();
    let mut out = Vec::with_capacity(5 + 16 + 12 * v.intervals.len() + 8 * t * d);
    out.extend_from_slice(RECORD_MAGIC);
    for n in [t, d, v.label.len(), v.intervals.len()] {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for iv in &v.intervals {
        for n in [iv.start, iv.end + 1, iv.class] {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
    }
    for x in v.appearance.data().iter().chain(v.motion.data()) {
        out.extend_from_slice(&(*x as f32).to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn fail(&self, detail: impl Into<String>) -> Error {
        Error::Parse {
            path: PathBuf::from(self.path),
            location: format!("byte {}", self.pos),
            detail: detail.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(format!("truncated record, wanted {n} more bytes")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f32(&mut self) -> Result<f64> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
    }
}

pub(crate) fn decode_record(bytes: &[u8], id: &str, path: &Path) -> Result<SyntheticVideo> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(RECORD_MAGIC.len())? != RECORD_MAGIC {
        r.pos = 0;
        return Err(r.fail("bad magic header"));
    }
    let t = r.u32()?;
    let d = r.u32()?;
    let c = r.u32()?;
    let n = r.u32()?;
    let expected = 12usize
        .saturating_mul(n)
        .saturating_add(8usize.saturating_mul(t).saturating_mul(d));
    if bytes.len() - r.pos != expected {
        return Err(r.fail(format!(
            "payload is {} bytes, header implies {expected}",
            bytes.len() - r.pos
        )));
    }
    let mut intervals = Vec::with_capacity(n);
    let mut label = vec![false; c];
    for _ in 0..n {
        let start = r.u32()?;
        let stop = r.u32()?;
        let class = r.u32()?;
        if start >= stop || stop > t || class >= c {
            return Err(r.fail(format!("invalid interval [{start}, {stop}) class {class}")));
        }
        label[class] = true;
        intervals.push(Interval {
            start,
            end: stop - 1,
            class,
        });
    }
    let stream = |r: &mut Reader| -> Result<Tensor2> {
        let data = (0..t * d).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
        Tensor2::from_vec(t, d, data)
    };
    let appearance = stream(&mut r)?;
    let motion = stream(&mut r)?;
    if !appearance.is_finite() || !motion.is_finite() {
        return Err(r.fail("non-finite feature value"));
    }
    Ok(SyntheticVideo {
        id: id.to_string(),
        appearance,
        motion,
        intervals,
        label,
        confounders: Vec::new(),
    })
}
