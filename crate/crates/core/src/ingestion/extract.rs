use log::warn;
use serde::{Deserialize, Serialize};

use crate::gateway::mock::parse_json_array;
use crate::gateway::{ChatMessage, ChatOptions, GatewayError, ModelGateway};
use crate::model::Chunk;
use crate::prompts;

/// The four information criteria a candidate sentence may satisfy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateFlags {
    pub has_entity: bool,
    pub has_state_change: bool,
    pub has_result_or_quantity: bool,
    pub has_month_precision_anchor: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEvent {
    pub sentence: String,
    pub temporal_expressions: Vec<String>,
    pub entity_mentions: Vec<String>,
    pub flags: CandidateFlags,
    pub chunk_index: usize,
    pub source_id: String,
}

/// One point per satisfied criterion.
pub fn score_information(c: &CandidateEvent) -> u8 {
    let f = c.flags;
    [
        f.has_entity,
        f.has_state_change,
        f.has_result_or_quantity,
        f.has_month_precision_anchor,
    ]
    .into_iter()
    .map(u8::from)
    .sum()
}

#[derive(Debug, Deserialize)]
struct ExtractedRecord {
    sentence: String,
    #[serde(default)]
    temporal_expressions: Vec<String>,
    #[serde(default)]
    entities: Vec<String>,
    #[serde(default)]
    has_entity: bool,
    #[serde(default)]
    has_state_change: bool,
    #[serde(default)]
    has_result_or_quantity: bool,
    #[serde(default)]
    has_month_precision_anchor: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExtractOutcome {
    Extracted(Vec<CandidateEvent>),
    /// Model output stayed malformed after one re-prompt.
    Skipped(String),
    Failed(GatewayError),
}

fn parse_records(text: &str, chunk: &Chunk) -> Result<Vec<CandidateEvent>, GatewayError> {
    let records: Vec<ExtractedRecord> = parse_json_array(text)?;
    Ok(records
        .into_iter()
        .filter(|r| !r.sentence.trim().is_empty())
        .map(|r| CandidateEvent {
            sentence: r.sentence.trim().to_string(),
            temporal_expressions: r.temporal_expressions,
            entity_mentions: r.entities,
            flags: CandidateFlags {
                has_entity: r.has_entity,
                has_state_change: r.has_state_change,
                has_result_or_quantity: r.has_result_or_quantity,
                has_month_precision_anchor: r.has_month_precision_anchor,
            },
            chunk_index: chunk.chunk_index,
            source_id: chunk.source_id.clone(),
        })
        .collect())
}

/// Asks the model for candidate events in a chunk. Malformed output gets one
/// corrective re-prompt before the chunk is skipped.
pub fn extract_candidates(chunk: &Chunk, gateway: &ModelGateway) -> ExtractOutcome {
    let prompt = prompts::render(prompts::EXTRACT_EVENTS, &[("chunk", &chunk.text)]);
    let mut messages = vec![ChatMessage::user(prompt)];
    let opts = ChatOptions::default();
    for attempt in 0..2 {
        let reply = match gateway.chat(&messages, &opts) {
            Ok(r) => r,
            Err(e) => {
                warn!(
                    "extraction failed for {}#{}: {e}",
                    chunk.source_id, chunk.chunk_index
                );
                return ExtractOutcome::Failed(e);
            }
        };
        match parse_records(&reply, chunk) {
            Ok(c) => return ExtractOutcome::Extracted(c),
            Err(e) if attempt == 0 => {
                messages.push(ChatMessage::assistant(reply));
                messages.push(ChatMessage::user(format!(
                    "TASK: extract_events\nYour previous output could not be parsed ({e}). \
                     Return only the JSON array described above.\n<<<INPUT\n{}\nINPUT>>>",
                    chunk.text
                )));
            }
            Err(e) => {
                warn!(
                    "skipping {}#{}: malformed extraction output: {e}",
                    chunk.source_id, chunk.chunk_index
                );
                return ExtractOutcome::Skipped(e.to_string());
            }
        }
    }
    unreachable!("loop returns on every path")
}
