use log::warn;
use serde_json::json;

use super::extract::{score_information, CandidateEvent};
use crate::gateway::mock::{parse_json_array, CorefSentence};
use crate::gateway::{ChatMessage, ChatOptions, ModelGateway};
use crate::model::{DynamicEventUnit, EntitySet, TimeAnchor};
use crate::prompts;

/// Rewrites pronouns through the model. On any failure the candidates are
/// returned unchanged.
pub fn resolve_coreference(
    title: &str,
    cands: Vec<CandidateEvent>,
    gateway: &ModelGateway,
) -> Vec<CandidateEvent> {
    if cands.is_empty() {
        return cands;
    }
    let payload = json!({
        "title": title,
        "sentences": cands
            .iter()
            .map(|c| json!({"sentence": c.sentence, "entities": c.entity_mentions}))
            .collect::<Vec<_>>(),
    });
    let prompt = prompts::render(
        prompts::RESOLVE_COREFERENCE,
        &[("payload", &serde_json::to_string_pretty(&payload).expect("json"))],
    );
    let resolved: Vec<CorefSentence> = match gateway
        .chat(&[ChatMessage::user(prompt)], &ChatOptions::default())
        .and_then(|reply| parse_json_array(&reply))
    {
        Ok(r) if r.len() == cands.len() => r,
        Ok(r) => {
            warn!("coreference returned {} sentences for {}", r.len(), cands.len());
            return cands;
        }
        Err(e) => {
            warn!("coreference failed: {e}");
            return cands;
        }
    };
    cands
        .into_iter()
        .zip(resolved)
        .map(|(mut c, r)| {
            if !r.sentence.trim().is_empty() {
                c.sentence = r.sentence.trim().to_string();
            }
            for e in r.entities {
                if !c.entity_mentions.iter().any(|m| m.eq_ignore_ascii_case(&e)) {
                    c.entity_mentions.push(e);
                }
            }
            c
        })
        .collect()
}

struct Group {
    sentence: String,
    anchor: TimeAnchor,
    entities: EntitySet,
    mentions: Vec<String>,
    info_score: u8,
    chunk_index: usize,
    source_id: String,
}

fn dedupe_key(sentence: &str) -> String {
    sentence.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Joins `next` onto `first` by predicate coordination when `next` opens with
/// an entity already named, otherwise with a semicolon.
fn coordinate(first: &str, next: &str, shared: &[String]) -> String {
    let head = first.trim().trim_end_matches(['.', '!', '?']);
    let tail = next.trim();
    for s in shared {
        if tail.len() > s.len()
            && tail.is_char_boundary(s.len())
            && tail[..s.len()].eq_ignore_ascii_case(s)
            && tail[s.len()..].starts_with(' ')
        {
            let predicate = tail[s.len()..].trim().trim_end_matches(['.', '!', '?']);
            return format!("{head}, and {predicate}.");
        }
    }
    format!("{head}; {}.", tail.trim_end_matches(['.', '!', '?']))
}

/// Turns scored candidates into event units.
///
/// Exact duplicates (same sentence and span, e.g. from chunk overlaps) are
/// dropped. Consecutive candidates with an identical non-static anchor and at
/// least one common entity are merged; anchors that differ at day resolution
/// are never merged. Ids are `<source_id>:<seq>`.
pub fn merge_candidates(cands: &[CandidateEvent], anchors: &[TimeAnchor]) -> Vec<DynamicEventUnit> {
    assert_eq!(cands.len(), anchors.len(), "candidates and anchors must align");
    let mut seen: Vec<(String, TimeAnchor)> = Vec::new();
    let mut groups: Vec<Group> = Vec::new();
    for (c, a) in cands.iter().zip(anchors) {
        let score = score_information(c);
        if score == 0 || c.sentence.trim().is_empty() {
            continue;
        }
        let key = dedupe_key(&c.sentence);
        if seen.iter().any(|(k, sa)| *k == key && sa.same_span(a)) {
            continue;
        }
        seen.push((key, a.clone()));
        let entities: EntitySet = c.entity_mentions.iter().collect();
        if let Some(last) = groups.last_mut() {
            let mergeable = !a.is_static()
                && last.anchor.same_span(a)
                && last.source_id == c.source_id
                && last.entities.intersection_len(&entities) > 0;
            if mergeable {
                let shared: Vec<String> = last
                    .mentions
                    .iter()
                    .filter(|m| entities.contains(m))
                    .cloned()
                    .collect();
                last.sentence = coordinate(&last.sentence, &c.sentence, &shared);
                last.entities.extend_from(&entities);
                last.mentions.extend(c.entity_mentions.iter().cloned());
                last.info_score = last.info_score.max(score);
                continue;
            }
        }
        groups.push(Group {
            sentence: c.sentence.trim().to_string(),
            anchor: a.clone(),
            entities,
            mentions: c.entity_mentions.clone(),
            info_score: score,
            chunk_index: c.chunk_index,
            source_id: c.source_id.clone(),
        });
    }
    groups
        .into_iter()
        .enumerate()
        .map(|(i, g)| DynamicEventUnit {
            event_id: format!("{}:{i:04}", g.source_id),
            source_id: g.source_id,
            sentence: g.sentence,
            anchor: g.anchor,
            entities: g.entities,
            info_score: g.info_score,
            chunk_index: g.chunk_index,
        })
        .collect()
}

/// Coreference rewrite followed by merging.
pub fn merge_and_resolve(
    title: &str,
    cands: Vec<CandidateEvent>,
    anchors: &[TimeAnchor],
    gateway: &ModelGateway,
) -> Vec<DynamicEventUnit> {
    let resolved = resolve_coreference(title, cands, gateway);
    merge_candidates(&resolved, anchors)
}
