//! Flat store of time-enhanced embeddings with exact cosine search.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{dot, l2_norm, TimeEnhancedEmbedding};
use crate::graph::IdMap;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("dimension mismatch: expected text {d} + time {d_tau}, got {got_text} + {got_time}")]
    Dimension {
        d: usize,
        d_tau: usize,
        got_text: usize,
        got_time: usize,
    },
    #[error("stored vectors need a unit-norm text segment and a unit-norm or zero time segment")]
    NotNormalized,
    #[error("query has dimension {got}, index expects {expected}")]
    QueryDimension { expected: usize, got: usize },
    #[error("corrupt index file {path}: {message}")]
    Corrupt { path: String, message: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexMetadata {
    pub version: u32,
    pub d: usize,
    pub d_tau: usize,
    pub config_hash: String,
    pub count: usize,
    pub ids: Vec<String>,
}

/// Norm of a `[text ; time]` row whose segments are unit or zero by contract:
/// 1 for a static row, sqrt(2) otherwise. Using the nominal value keeps scores
/// of rows that differ only in their time segment exactly comparable.
fn nominal_norm(row: &[f64], d: usize) -> Option<f64> {
    let unit = |x: f64| (x - 1.0).abs() < 1e-6;
    let (text, time) = (l2_norm(&row[..d]), l2_norm(&row[d..]));
    match (unit(text), time == 0.0, unit(time)) {
        (true, true, _) => Some(1.0),
        (true, false, true) => Some(std::f64::consts::SQRT_2),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    d: usize,
    d_tau: usize,
    config_hash: String,
    data: Vec<f64>,
    norms: Vec<f64>,
    ids: IdMap,
}

impl VectorIndex {
    pub fn new(d: usize, d_tau: usize, config_hash: impl Into<String>) -> Self {
        VectorIndex {
            d,
            d_tau,
            config_hash: config_hash.into(),
            data: Vec::new(),
            norms: Vec::new(),
            ids: IdMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.d + self.d_tau
    }

    pub fn text_dim(&self) -> usize {
        self.d
    }

    pub fn d_tau(&self) -> usize {
        self.d_tau
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &IdMap {
        &self.ids
    }

    pub fn vector(&self, row: usize) -> &[f64] {
        let n = self.dim();
        &self.data[row * n..(row + 1) * n]
    }

    /// Stores `[text ; time]` for `event_id`, replacing an earlier vector in place.
    pub fn upsert(&mut self, event_id: &str, emb: &TimeEnhancedEmbedding) -> Result<usize, IndexError> {
        if emb.text_part.len() != self.d || emb.time_part.len() != self.d_tau {
            return Err(IndexError::Dimension {
                d: self.d,
                d_tau: self.d_tau,
                got_text: emb.text_part.len(),
                got_time: emb.time_part.len(),
            });
        }
        let v = emb.concat();
        let norm = nominal_norm(&v, self.d).ok_or(IndexError::NotNormalized)?;
        let row = self.ids.insert(event_id);
        if row == self.norms.len() {
            self.data.extend_from_slice(&v);
            self.norms.push(norm);
        } else {
            let n = self.dim();
            self.data[row * n..(row + 1) * n].copy_from_slice(&v);
            self.norms[row] = norm;
        }
        Ok(row)
    }

    /// Exact top-`k` by cosine, descending, ties by event id.
    pub fn search(&self, query: &[f64], k: usize) -> Result<Vec<(String, f64)>, IndexError> {
        if query.len() != self.dim() {
            return Err(IndexError::QueryDimension {
                expected: self.dim(),
                got: query.len(),
            });
        }
        let qn = l2_norm(query);
        let mut scored: Vec<(usize, f64)> = (0..self.len())
            .map(|r| {
                let denom = qn * self.norms[r];
                let s = if denom == 0.0 { 0.0 } else { dot(query, self.vector(r)) / denom };
                (r, s)
            })
            .collect();
        let by_rank = |x: &(usize, f64), y: &(usize, f64)| {
            y.1.total_cmp(&x.1)
                .then_with(|| self.ids.id(x.0).cmp(&self.ids.id(y.0)))
        };
        let k = k.min(scored.len());
        if k == 0 {
            return Ok(Vec::new());
        }
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, by_rank);
            scored.truncate(k);
        }
        scored.sort_by(by_rank);
        Ok(scored
            .into_iter()
            .map(|(r, s)| (self.ids.id(r).expect("row").to_string(), s))
            .collect())
    }

    pub fn metadata(&self) -> IndexMetadata {
        IndexMetadata {
            version: 1,
            d: self.d,
            d_tau: self.d_tau,
            config_hash: self.config_hash.clone(),
            count: self.len(),
            ids: self.ids.ids().to_vec(),
        }
    }

    /// JSON metadata line followed by little-endian `f64` rows.
    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let io_err = |source| IndexError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut buf = serde_json::to_vec(&self.metadata()).expect("metadata serializes");
        buf.push(b'\n');
        buf.reserve(self.data.len() * 8);
        for x in &self.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        let tmp = path.with_extension("tmp");
        let mut f = std::fs::File::create(&tmp).map_err(io_err)?;
        f.write_all(&buf).map_err(io_err)?;
        f.sync_all().map_err(io_err)?;
        std::fs::rename(&tmp, path).map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let io_err = |source| IndexError::Io {
            path: path.display().to_string(),
            source,
        };
        let corrupt = |message: String| IndexError::Corrupt {
            path: path.display().to_string(),
            message,
        };
        let mut r = std::io::BufReader::new(std::fs::File::open(path).map_err(io_err)?);
        let mut header = Vec::new();
        r.read_until(b'\n', &mut header).map_err(io_err)?;
        let meta: IndexMetadata =
            serde_json::from_slice(&header).map_err(|e| corrupt(format!("bad header: {e}")))?;
        if meta.version != 1 || meta.ids.len() != meta.count || meta.d + meta.d_tau == 0 {
            return Err(corrupt("header counts or version do not match".into()));
        }
        let ids = IdMap::from_ids(meta.ids).ok_or_else(|| corrupt("duplicate event ids".into()))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(io_err)?;
        let n = meta.d + meta.d_tau;
        if bytes.len() != meta.count * n * 8 {
            return Err(corrupt(format!(
                "expected {} bytes of vectors, found {}",
                meta.count * n * 8,
                bytes.len()
            )));
        }
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let norms = data
            .chunks_exact(n)
            .map(|row| nominal_norm(row, meta.d))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| corrupt("stored vector is not segment-normalized".into()))?;
        Ok(VectorIndex {
            d: meta.d,
            d_tau: meta.d_tau,
            config_hash: meta.config_hash,
            data,
            norms,
            ids,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(text: &[f64], time: &[f64]) -> TimeEnhancedEmbedding {
        TimeEnhancedEmbedding {
            text_part: text.to_vec(),
            time_part: time.to_vec(),
            is_static: time.iter().all(|x| *x == 0.0),
        }
    }

    #[test]
    fn upsert_rows_and_replace() {
        let mut ix = VectorIndex::new(2, 2, "h");
        assert_eq!(ix.upsert("a", &emb(&[1.0, 0.0], &[0.0, 1.0])).unwrap(), 0);
        assert_eq!(ix.upsert("b", &emb(&[0.0, 1.0], &[0.0, 1.0])).unwrap(), 1);
        assert_eq!(ix.upsert("a", &emb(&[0.0, 1.0], &[1.0, 0.0])).unwrap(), 0);
        assert_eq!(ix.vector(0), &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(ix.len(), 2);
        assert!(matches!(ix.upsert("c", &emb(&[1.0, 0.0], &[1.0])), Err(IndexError::Dimension { .. })));
    }

    #[test]
    fn self_match_ranks_first() {
        let mut ix = VectorIndex::new(2, 2, "h");
        ix.upsert("a", &emb(&[0.6, 0.8], &[1.0, 0.0])).unwrap();
        ix.upsert("b", &emb(&[0.8, 0.6], &[0.0, 1.0])).unwrap();
        let r = ix.search(&[0.6, 0.8, 1.0, 0.0], 5).unwrap();
        assert_eq!(r[0].0, "a");
        assert!((r[0].1 - 1.0).abs() < 1e-9);
        assert_eq!(r.len(), 2);
        assert!(VectorIndex::new(2, 2, "h").search(&[1.0, 0.0, 0.0, 0.0], 3).unwrap().is_empty());
    }

    #[test]
    fn ties_break_by_id() {
        let mut ix = VectorIndex::new(2, 2, "h");
        for id in ["c", "a", "b"] {
            ix.upsert(id, &emb(&[1.0, 0.0], &[0.0, 1.0])).unwrap();
        }
        let r = ix.search(&[1.0, 0.0, 0.0, 0.0], 3).unwrap();
        let ids: Vec<&str> = r.iter().map(|(i, _)| i.as_str()).collect();
        assert_eq!(ids, vec!["a", "b", "c"]);
        assert_eq!(r[0].1, r[2].1);
    }

    #[test]
    fn save_load_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.bin");
        let mut ix = VectorIndex::new(3, 2, "abc");
        let t = 1.0 / 3.0f64.sqrt();
        ix.upsert("x", &emb(&[t, t, t], &[0.6, -0.8])).unwrap();
        ix.upsert("y", &emb(&[1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0], &[0.0, 0.0])).unwrap();
        assert!(matches!(ix.upsert("z", &emb(&[1.0, 1.0, 0.0], &[0.0, 0.0])), Err(IndexError::NotNormalized)));
        ix.save(&p).unwrap();
        assert_eq!(VectorIndex::load(&p).unwrap(), ix);

        let mut bytes = std::fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(VectorIndex::load(&p), Err(IndexError::Corrupt { .. })));
    }
}
