//! Query-time pipeline: temporal intent parsing, time-aware seed retrieval
//! with reranking, weighted random walks, and timeline construction.

mod rerank;
mod timeline;
mod walk;

use std::collections::BTreeSet;

use log::warn;
use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use rerank::{GatewayReranker, LexicalReranker, Reranker};
pub use timeline::{build_timeline, EventTimeline, TimelineEntry};
pub use walk::{random_walk, run_walks, walk_rng};

use crate::encoding::{embed_query, EncodingError};
use crate::gateway::{json_slice, ChatMessage, ChatOptions, ModelGateway};
use crate::graph::{EventGraph, GraphError};
use crate::index::{IndexError, VectorIndex};
use crate::ingestion::{normalize_time, TimeStack};
use crate::model::{days_from_civil, Granularity, TimeAnchor};
use crate::prompts;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("lambda {0} outside [0, 1]")]
    Lambda(f64),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("index row {0} has no graph node")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum QuestionClass {
    Boundary,
    Continuity,
    Aggregate,
    #[default]
    Other,
}

impl QuestionClass {
    pub fn as_str(self) -> &'static str {
        match self {
            QuestionClass::Boundary => "boundary",
            QuestionClass::Continuity => "continuity",
            QuestionClass::Aggregate => "aggregate",
            QuestionClass::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "boundary" => Some(QuestionClass::Boundary),
            "continuity" => Some(QuestionClass::Continuity),
            "aggregate" => Some(QuestionClass::Aggregate),
            "other" => Some(QuestionClass::Other),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryPlan {
    pub question: String,
    pub t_q: Option<TimeAnchor>,
    pub lambda: f64,
    pub question_class: QuestionClass,
}

#[derive(Deserialize)]
struct ParsedQuery {
    #[serde(default)]
    temporal_expression: Option<String>,
    #[serde(default)]
    question_class: Option<String>,
}

static MONTH_YEAR: Lazy<Regex> = Lazy::new(|| {
    Regex::new(
        r"(?i)\b(jan|feb|mar|apr|may|jun|jul|aug|sep|oct|nov|dec)[a-z]*\.?\s+(\d{4})\b",
    )
    .expect("regex")
});
static YEAR: Lazy<Regex> = Lazy::new(|| Regex::new(r"\b(\d{4})\b").expect("regex"));

const MONTHS: [&str; 12] = [
    "jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec",
];

/// Month-year first, then a bare four-digit year.
pub fn fallback_time(question: &str) -> Option<TimeAnchor> {
    if let Some(c) = MONTH_YEAR.captures(question) {
        let m = MONTHS.iter().position(|x| c[1].eq_ignore_ascii_case(x))? as u32 + 1;
        let y: i32 = c[2].parse().ok()?;
        let day = days_from_civil(y, m, 1).ok()?;
        return Some(TimeAnchor::point(day, Granularity::Month, &c[0]));
    }
    let c = YEAR.captures(question)?;
    let y: i32 = c[1].parse().ok()?;
    Some(TimeAnchor::point(days_from_civil(y, 1, 1).ok()?, Granularity::Year, &c[0]))
}

/// Extracts the temporal constraint and question class through the model,
/// falling back to regex date extraction and class `other`.
pub fn parse_query(question: &str, lambda: f64, gateway: &ModelGateway) -> Result<QueryPlan, RetrievalError> {
    let question = question.trim();
    if question.is_empty() {
        return Err(RetrievalError::EmptyQuestion);
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(RetrievalError::Lambda(lambda));
    }
    let prompt = prompts::render(prompts::PARSE_QUERY, &[("question", question)]);
    let parsed = gateway
        .chat(&[ChatMessage::user(prompt)], &ChatOptions::default())
        .map_err(|e| e.to_string())
        .and_then(|reply| {
            let obj = json_slice(&reply, '{', '}').ok_or("no JSON object in output")?;
            serde_json::from_str::<ParsedQuery>(obj).map_err(|e| e.to_string())
        });
    let (t_q, class) = match parsed {
        Ok(p) => {
            let t = p
                .temporal_expression
                .filter(|e| !e.trim().is_empty())
                .map(|e| normalize_time(&e, &mut TimeStack::new(), 0))
                .filter(|a| !a.is_static());
            let class = p
                .question_class
                .as_deref()
                .and_then(QuestionClass::parse)
                .unwrap_or_default();
            (t, class)
        }
        Err(e) => {
            warn!("query parsing fell back to regex: {e}");
            (fallback_time(question), QuestionClass::Other)
        }
    };
    Ok(QueryPlan {
        question: question.to_string(),
        t_q,
        lambda,
        question_class: class,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedParams {
    pub k_candidates: usize,
    pub seed_count: usize,
    pub rerank_floor: f64,
}

impl Default for SeedParams {
    fn default() -> Self {
        SeedParams {
            k_candidates: 20,
            seed_count: 5,
            rerank_floor: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub event_id: String,
    pub vector_score: f64,
    pub rerank_score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedSelection {
    /// Vector-search hits in reranked order.
    pub candidates: Vec<Candidate>,
    pub seeds: Vec<String>,
}

/// Time-aware vector search, reranking, and seed selection. Seeds are the
/// best reranked candidates scoring strictly above the floor.
pub fn retrieve_seeds(
    plan: &QueryPlan,
    question_vector: &[f64],
    index: &VectorIndex,
    graph: &EventGraph,
    reranker: &dyn Reranker,
    params: &SeedParams,
) -> Result<SeedSelection, RetrievalError> {
    if index.is_empty() {
        return Ok(SeedSelection::default());
    }
    let q = embed_query(question_vector, plan.t_q.as_ref(), plan.lambda, graph.config())?;
    let hits = index.search(&q, params.k_candidates.max(1))?;
    let sentences: Vec<String> = hits
        .iter()
        .map(|(id, _)| {
            graph
                .node(id)
                .map(|n| n.sentence.clone())
                .ok_or_else(|| RetrievalError::Inconsistent(id.clone()))
        })
        .collect::<Result<_, _>>()?;
    let scores = reranker.score(&plan.question, &sentences);
    let mut candidates: Vec<Candidate> = hits
        .into_iter()
        .zip(scores)
        .map(|((event_id, vector_score), rerank_score)| Candidate {
            event_id,
            vector_score,
            rerank_score,
        })
        .collect();
    candidates.sort_by(|a, b| b.rerank_score.total_cmp(&a.rerank_score));
    let mut seen = BTreeSet::new();
    let seeds = candidates
        .iter()
        .filter(|c| c.rerank_score > params.rerank_floor)
        .filter(|c| seen.insert(c.event_id.clone()))
        .take(params.seed_count)
        .map(|c| c.event_id.clone())
        .collect();
    Ok(SeedSelection { candidates, seeds })
}

/// Per-query audit record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub question: String,
    pub t_q: Option<String>,
    pub lambda: f64,
    pub question_class: QuestionClass,
    pub candidates: Vec<Candidate>,
    pub seeds: Vec<String>,
    pub paths: Vec<Vec<String>>,
    pub timeline_event_ids: Vec<String>,
    pub rendered_timeline: String,
    pub answer: String,
    pub answer_marker_missing: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_reasoning: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}
