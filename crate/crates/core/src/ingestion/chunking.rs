use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::model::Chunk;
use crate::text::Tokenizer;

/// One corpus record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    #[serde(rename = "doc_id")]
    pub source_id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkConfig {
    pub chunk_tokens: usize,
    pub overlap_tokens: usize,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        ChunkConfig {
            chunk_tokens: 1200,
            overlap_tokens: 64,
        }
    }
}

impl ChunkConfig {
    pub fn stride(&self) -> usize {
        self.chunk_tokens - self.overlap_tokens
    }
}

/// Token windows `[start, end)` covering `n` tokens.
pub fn window_ranges(n: usize, cfg: ChunkConfig) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut start = 0;
    loop {
        let end = (start + cfg.chunk_tokens).min(n);
        out.push((start, end));
        if end == n {
            break;
        }
        start += cfg.stride();
    }
    out
}

/// Splits a document into overlapping token windows, each prefixed with the title line.
pub fn chunk_document(
    doc: &Document,
    cfg: ChunkConfig,
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<Chunk>, IngestError> {
    if cfg.overlap_tokens == 0 || cfg.chunk_tokens <= cfg.overlap_tokens {
        return Err(IngestError::Validation(format!(
            "chunk_tokens ({}) must exceed overlap_tokens ({}) > 0",
            cfg.chunk_tokens, cfg.overlap_tokens
        )));
    }
    let spans = tokenizer.token_spans(&doc.text);
    if spans.is_empty() {
        return Err(IngestError::Validation(format!(
            "document {} has no text",
            doc.source_id
        )));
    }
    let title = doc.title.trim();
    Ok(window_ranges(spans.len(), cfg)
        .into_iter()
        .enumerate()
        .map(|(i, (s, e))| {
            let body = &doc.text[spans[s].0..spans[e - 1].1];
            Chunk {
                source_id: doc.source_id.clone(),
                chunk_index: i,
                title: title.to_string(),
                text: format!("{title}\n{body}"),
                token_count: e - s,
            }
        })
        .collect())
}
