//! Documents to dynamic event units: chunking, model-driven candidate
//! extraction, temporal normalization, information filtering and merging.

pub mod chunking;
pub mod extract;
pub mod merge;
pub mod timex;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chunking::{chunk_document, ChunkConfig, Document};
pub use extract::{extract_candidates, score_information, CandidateEvent, CandidateFlags, ExtractOutcome};
pub use merge::{merge_and_resolve, merge_candidates};
pub use timex::{normalize_time, TimeStack};

use crate::gateway::ModelGateway;
use crate::model::{DynamicEventUnit, TimeAnchor};
use crate::text::Tokenizer;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads JSON-lines records, reporting the 1-based line of the first bad record.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, IngestError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| IngestError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), IngestError> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).expect("serializable record");
        buf.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&buf).map_err(io_err(path))
}

/// Loads a corpus file, rejecting duplicate ids and empty documents.
pub fn read_corpus(path: &Path) -> Result<Vec<Document>, IngestError> {
    let docs: Vec<Document> = read_jsonl(path)?;
    let mut seen = std::collections::BTreeSet::new();
    for d in &docs {
        if !seen.insert(d.source_id.clone()) {
            return Err(IngestError::Validation(format!("duplicate doc_id {}", d.source_id)));
        }
        if d.text.trim().is_empty() {
            return Err(IngestError::Validation(format!("document {} is empty", d.source_id)));
        }
    }
    Ok(docs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChunkStatus {
    Ok,
    Skipped,
    Failed,
}

/// One manifest line per processed chunk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub doc_id: String,
    pub chunk_index: usize,
    pub status: ChunkStatus,
    pub deu_count: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct IngestConfig {
    pub chunk: ChunkConfig,
    pub max_concurrency: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            chunk: ChunkConfig::default(),
            max_concurrency: 32,
        }
    }
}

/// Results of an earlier run that can be reused.
#[derive(Debug, Clone, Default)]
pub struct PriorRun {
    pub manifest: Vec<ManifestRecord>,
    pub units: Vec<DynamicEventUnit>,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOutput {
    pub units: Vec<DynamicEventUnit>,
    pub manifest: Vec<ManifestRecord>,
    pub reused_documents: usize,
    pub processed_documents: usize,
}

/// Resolves anchors for a chunk's candidates in document order with a fresh
/// time stack, then drops candidates scoring zero.
pub fn anchor_and_filter(cands: Vec<CandidateEvent>) -> (Vec<CandidateEvent>, Vec<TimeAnchor>) {
    let mut stack = TimeStack::new();
    let mut kept = Vec::new();
    let mut anchors = Vec::new();
    for (pos, c) in cands.into_iter().enumerate() {
        let anchor = timex::anchor_for_expressions(&c.temporal_expressions, &mut stack, pos);
        if score_information(&c) >= 1 {
            kept.push(c);
            anchors.push(anchor);
        }
    }
    (kept, anchors)
}

fn completed_docs(prior: &PriorRun, docs: &[Document], chunk_counts: &[usize]) -> BTreeMap<String, Vec<ManifestRecord>> {
    let mut by_doc: BTreeMap<String, Vec<ManifestRecord>> = BTreeMap::new();
    for r in &prior.manifest {
        by_doc.entry(r.doc_id.clone()).or_default().push(r.clone());
    }
    docs.iter()
        .zip(chunk_counts)
        .filter_map(|(d, &n)| {
            let recs = by_doc.get(&d.source_id)?;
            let done = recs.len() == n && recs.iter().all(|r| r.status != ChunkStatus::Failed);
            done.then(|| (d.source_id.clone(), recs.clone()))
        })
        .collect()
}

/// Runs ingestion over `docs`, reusing documents that finished in `prior`.
/// Chunk extraction runs on a pool of `max_concurrency` workers; merging runs
/// per document once all its chunks are back.
pub fn ingest(
    docs: &[Document],
    cfg: IngestConfig,
    gateway: &ModelGateway,
    tokenizer: &dyn Tokenizer,
    prior: &PriorRun,
) -> Result<IngestOutput, IngestError> {
    let chunked: Vec<Vec<crate::model::Chunk>> = docs
        .iter()
        .map(|d| chunk_document(d, cfg.chunk, tokenizer))
        .collect::<Result<_, _>>()?;
    let counts: Vec<usize> = chunked.iter().map(Vec::len).collect();
    let done = completed_docs(prior, docs, &counts);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.max_concurrency.max(1))
        .build()
        .map_err(|e| IngestError::Validation(e.to_string()))?;

    let pending: Vec<(usize, &crate::model::Chunk)> = chunked
        .iter()
        .enumerate()
        .filter(|(i, _)| !done.contains_key(&docs[*i].source_id))
        .flat_map(|(i, cs)| cs.iter().map(move |c| (i, c)))
        .collect();
    let outcomes: Vec<(usize, usize, ExtractOutcome)> = pool.install(|| {
        pending
            .par_iter()
            .map(|(di, c)| (*di, c.chunk_index, extract_candidates(c, gateway)))
            .collect()
    });

    let mut per_doc: BTreeMap<usize, Vec<(usize, ExtractOutcome)>> = BTreeMap::new();
    for (di, ci, o) in outcomes {
        per_doc.entry(di).or_default().push((ci, o));
    }

    let processed: Vec<(usize, Vec<DynamicEventUnit>, Vec<ManifestRecord>)> = pool.install(|| {
        per_doc
            .into_par_iter()
            .map(|(di, mut outcomes)| {
                outcomes.sort_by_key(|(ci, _)| *ci);
                let doc = &docs[di];
                let mut cands = Vec::new();
                let mut anchors = Vec::new();
                let mut statuses = Vec::new();
                for (ci, o) in outcomes {
                    let status = match o {
                        ExtractOutcome::Extracted(c) => {
                            let (k, a) = anchor_and_filter(c);
                            cands.extend(k);
                            anchors.extend(a);
                            ChunkStatus::Ok
                        }
                        ExtractOutcome::Skipped(_) => ChunkStatus::Skipped,
                        ExtractOutcome::Failed(_) => ChunkStatus::Failed,
                    };
                    statuses.push((ci, status));
                }
                let units = merge_and_resolve(&doc.title, cands, &anchors, gateway);
                let records = statuses
                    .into_iter()
                    .map(|(ci, status)| ManifestRecord {
                        doc_id: doc.source_id.clone(),
                        chunk_index: ci,
                        status,
                        deu_count: units.iter().filter(|u| u.chunk_index == ci).count(),
                    })
                    .collect();
                (di, units, records)
            })
            .collect()
    });

    let mut fresh: BTreeMap<usize, (Vec<DynamicEventUnit>, Vec<ManifestRecord>)> =
        processed.into_iter().map(|(di, u, r)| (di, (u, r))).collect();
    let mut out = IngestOutput::default();
    for (di, doc) in docs.iter().enumerate() {
        if let Some(records) = done.get(&doc.source_id) {
            out.units.extend(
                prior
                    .units
                    .iter()
                    .filter(|u| u.source_id == doc.source_id)
                    .cloned(),
            );
            out.manifest.extend(records.iter().cloned());
            out.reused_documents += 1;
        } else if let Some((units, records)) = fresh.remove(&di) {
            if records.iter().any(|r| r.status == ChunkStatus::Failed) {
                warn!("document {} has failed chunks; re-run to retry them", doc.source_id);
            }
            out.units.extend(units);
            out.manifest.extend(records);
            out.processed_documents += 1;
        }
    }
    info!(
        "ingested {} documents ({} reused), {} event units",
        docs.len(),
        out.reused_documents,
        out.units.len()
    );
    Ok(out)
}
