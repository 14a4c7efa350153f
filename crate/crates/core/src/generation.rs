//! Time-aware chain-of-thought prompting and answer extraction.

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatMessage, ChatOptions, GatewayError, ModelGateway};
use crate::model::{format_day, Granularity, TimeAnchor};
use crate::prompts;
use crate::retrieval::{EventTimeline, QueryPlan, QuestionClass};
use crate::text::Tokenizer;

pub const ANSWER_MARKER: &str = "ANSWER:";
pub const INSUFFICIENT_EVIDENCE: &str = "insufficient evidence";

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("prompt needs {needed} tokens without any timeline, cap is {cap}")]
    PromptTooLong { needed: usize, cap: usize },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeCotPrompt {
    pub system_preamble: String,
    pub timeline_block: String,
    pub reasoning_template: Vec<String>,
    pub question_block: String,
    pub class_hint: QuestionClass,
    pub time_scope: String,
    /// Full user message.
    pub rendered: String,
}

impl TimeCotPrompt {
    pub fn token_count(&self, tokenizer: &dyn Tokenizer) -> usize {
        tokenizer.count(&self.system_preamble) + tokenizer.count(&self.rendered)
    }

    /// System and user messages joined for audit output.
    pub fn full_text(&self) -> String {
        format!("{}\n\n{}", self.system_preamble, self.rendered)
    }
}

fn last_day_label(end_exclusive: i64) -> String {
    format_day(end_exclusive - 1, Granularity::Day)
}

fn scope_step(t_q: Option<&TimeAnchor>) -> String {
    match t_q.and_then(|a| a.coverage().map(|c| (a, c))) {
        Some((a, (s, e))) => format!(
            "The question is restricted to {}, that is from {} to {}.",
            a.timestamp_label(),
            format_day(s, Granularity::Day),
            last_day_label(e)
        ),
        None => "The question names no explicit time; infer the relevant period from the question and the timeline.".into(),
    }
}

fn contains(outer: (i64, i64), inner: (i64, i64)) -> bool {
    outer.0 <= inner.0 && inner.1 <= outer.1
}

fn class_step(plan: &QueryPlan, timeline: &EventTimeline) -> String {
    match plan.question_class {
        QuestionClass::Boundary => "This is a boundary question: compare the timestamps of the in-scope events and select the earliest or the latest one, as the question asks.".into(),
        QuestionClass::Continuity => {
            let Some((label, scope)) = plan.t_q.as_ref().and_then(|a| a.coverage().map(|c| (a.timestamp_label(), c))) else {
                return "This is a continuity question: find the state that holds at the time the question refers to. Use interval containment: an interval event applies when its interval contains that time, and a dated change stays in effect until a later event changes it.".into();
            };
            let holders: Vec<String> = timeline
                .entries()
                .enumerate()
                .filter(|(_, e)| matches!(e.anchor.span(), crate::model::AnchorSpan::Interval { .. }))
                .filter(|(_, e)| e.anchor.coverage().is_some_and(|c| contains(c, scope)))
                .map(|(i, e)| format!("Event # {} [{}]", i + 1, e.anchor.timestamp_label()))
                .collect();
            let listed = if holders.is_empty() {
                "No interval event contains it".to_string()
            } else {
                format!("Interval events containing it: {}", holders.join(", "))
            };
            format!(
                "This is a continuity question: use interval containment to find the state that holds at {label}. An interval event applies only if its interval contains {label}, and a dated change stays in effect until a later event changes it. {listed}."
            )
        }
        QuestionClass::Aggregate => "This is an aggregate question: collect every in-scope event that matches the question and count or list them, without counting the same event twice.".into(),
        QuestionClass::Other => "Select the in-scope events that answer the question most directly.".into(),
    }
}

fn answer_step(timeline: &EventTimeline) -> String {
    if timeline.is_empty() {
        format!("The timeline is empty, so answer '{INSUFFICIENT_EVIDENCE}'.")
    } else {
        format!("Give a short answer and justify it by citing the event indices and timestamps you relied on, in the form \"Event # <index> [<timestamp>]\". If no event supports an answer, answer '{INSUFFICIENT_EVIDENCE}'.")
    }
}

fn render(plan: &QueryPlan, timeline: &EventTimeline) -> TimeCotPrompt {
    let timeline_block = if timeline.is_empty() {
        "(no events)".to_string()
    } else {
        timeline.rendered.clone()
    };
    let time_scope = plan
        .t_q
        .as_ref()
        .map(TimeAnchor::timestamp_label)
        .unwrap_or_else(|| "none".into());
    let steps = [
        scope_step(plan.t_q.as_ref()),
        class_step(plan, timeline),
        answer_step(timeline),
    ];
    let rendered = prompts::render(
        prompts::TIME_COT,
        &[
            ("timeline", &timeline_block),
            ("question", &plan.question),
            ("time_scope", &time_scope),
            ("question_class", plan.question_class.as_str()),
            ("scope_step", &steps[0]),
            ("class_step", &steps[1]),
            ("answer_step", &steps[2]),
        ],
    );
    let reasoning_template = rendered
        .lines()
        .skip_while(|l| l.trim() != "[Reasoning steps]")
        .skip(1)
        .take_while(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect();
    TimeCotPrompt {
        system_preamble: prompts::TIME_COT_SYSTEM.trim().to_string(),
        timeline_block,
        reasoning_template,
        question_block: plan.question.clone(),
        class_hint: plan.question_class,
        time_scope,
        rendered,
    }
}

/// Instantiates the reasoning template. While the prompt exceeds `cap`
/// tokens, the least important timeline entry is dropped and the prompt is
/// rebuilt; `timeline` is left in its final, truncated state.
pub fn assemble_prompt(
    plan: &QueryPlan,
    timeline: &mut EventTimeline,
    cap: usize,
    tokenizer: &dyn Tokenizer,
) -> Result<TimeCotPrompt, GenerationError> {
    loop {
        let p = render(plan, timeline);
        let needed = p.token_count(tokenizer);
        if needed <= cap {
            return Ok(p);
        }
        if !timeline.drop_lowest() {
            return Err(GenerationError::PromptTooLong { needed, cap });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedAnswer {
    pub answer: String,
    pub raw_reasoning: String,
    /// The reply had no answer marker and the whole text was used.
    pub marker_missing: bool,
}

/// Text after the last marker line, or `None` when there is no marker.
pub fn extract_answer(text: &str) -> Option<String> {
    text.lines()
        .rev()
        .find_map(|l| l.trim_start().strip_prefix(ANSWER_MARKER))
        .map(|a| a.trim().to_string())
}

pub fn generate_answer(prompt: &TimeCotPrompt, gateway: &ModelGateway) -> Result<GeneratedAnswer, GenerationError> {
    let reply = gateway.chat(
        &[
            ChatMessage::system(prompt.system_preamble.clone()),
            ChatMessage::user(prompt.rendered.clone()),
        ],
        &ChatOptions::default(),
    )?;
    Ok(match extract_answer(&reply) {
        Some(answer) => GeneratedAnswer {
            answer,
            raw_reasoning: reply,
            marker_missing: false,
        },
        None => {
            warn!("model reply has no {ANSWER_MARKER} line; using the full text");
            GeneratedAnswer {
                answer: reply.trim().to_string(),
                raw_reasoning: reply,
                marker_missing: true,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Granularity;
    use crate::retrieval::TimelineEntry;
    use crate::text::WhitespaceTokenizer;

    fn year(y: i32) -> TimeAnchor {
        TimeAnchor::from_ymd(y, 1, 1, Granularity::Year).unwrap()
    }

    fn plan(class: QuestionClass, t_q: Option<TimeAnchor>) -> QueryPlan {
        QueryPlan {
            question: "Which team did Marco Rossi play for in May 2013?".into(),
            t_q,
            lambda: 0.3,
            question_class: class,
        }
    }

    fn timeline() -> EventTimeline {
        let e = |id: &str, anchor: TimeAnchor, s: &str| TimelineEntry {
            event_id: id.into(),
            anchor,
            sentence: s.into(),
        };
        EventTimeline::from_priority(vec![
            e("r:1", TimeAnchor::interval(year(2012).index_day().unwrap(), year(2014).index_day().unwrap(), Granularity::Year, "").unwrap(), "Marco Rossi played for Roma from 2012 to 2014."),
            e("r:0", year(2009), "Marco Rossi joined Lazio in 2009."),
        ])
    }

    #[test]
    fn empty_timeline_requests_insufficient_evidence() {
        let mut t = EventTimeline::default();
        let p = assemble_prompt(&plan(QuestionClass::Other, None), &mut t, 16_384, &WhitespaceTokenizer).unwrap();
        assert!(p.rendered.contains("answer 'insufficient evidence'"));
        assert!(p.rendered.contains("(no events)"));
        assert_eq!(p.time_scope, "none");
    }

    #[test]
    fn continuity_step_names_containing_interval() {
        let may = TimeAnchor::from_ymd(2013, 5, 1, Granularity::Month).unwrap();
        let mut t = timeline();
        let p = assemble_prompt(&plan(QuestionClass::Continuity, Some(may)), &mut t, 16_384, &WhitespaceTokenizer).unwrap();
        assert_eq!(p.reasoning_template.len(), 5);
        assert!(p.reasoning_template[3].contains("interval containment"));
        assert!(p.reasoning_template[3].contains("Event # 2 [2012/2014]"));
        assert!(p.reasoning_template[0].contains("from 2013-05-01 to 2013-05-31"));
        let timeline_at = p.rendered.find("[Event timeline]").unwrap();
        assert!(timeline_at < p.rendered.find("[Question]").unwrap());
    }

    #[test]
    fn deterministic_and_capped() {
        let pl = plan(QuestionClass::Boundary, Some(year(2013)));
        let a = assemble_prompt(&pl, &mut timeline(), 16_384, &WhitespaceTokenizer).unwrap();
        let b = assemble_prompt(&pl, &mut timeline(), 16_384, &WhitespaceTokenizer).unwrap();
        assert_eq!(a, b);

        let full = a.token_count(&WhitespaceTokenizer);
        let mut t = timeline();
        let p = assemble_prompt(&pl, &mut t, full - 1, &WhitespaceTokenizer).unwrap();
        assert!(p.token_count(&WhitespaceTokenizer) < full);
        assert_eq!(t.len(), 1);
        assert!(matches!(
            assemble_prompt(&pl, &mut timeline(), 10, &WhitespaceTokenizer),
            Err(GenerationError::PromptTooLong { .. })
        ));
    }

    #[test]
    fn answer_marker_extraction() {
        assert_eq!(extract_answer("x\nANSWER: Lazio \n"), Some("Lazio".into()));
        assert_eq!(extract_answer("ANSWER: a\nmore\nANSWER: b"), Some("b".into()));
        assert_eq!(extract_answer("no marker"), None);
    }

    #[test]
    fn mock_answers_from_timeline() {
        let gw = ModelGateway::mock(16);
        let may = TimeAnchor::from_ymd(2013, 5, 1, Granularity::Month).unwrap();
        let p = assemble_prompt(&plan(QuestionClass::Continuity, Some(may)), &mut timeline(), 16_384, &WhitespaceTokenizer).unwrap();
        let a = generate_answer(&p, &gw).unwrap();
        assert_eq!(a.answer, "Marco Rossi played for Roma from 2012 to 2014.");
        assert!(!a.marker_missing);
        assert!(a.raw_reasoning.contains("Event # 2 [2012/2014]"));

        let mut empty = EventTimeline::default();
        let p = assemble_prompt(&plan(QuestionClass::Other, None), &mut empty, 16_384, &WhitespaceTokenizer).unwrap();
        assert_eq!(generate_answer(&p, &gw).unwrap().answer, INSUFFICIENT_EVIDENCE);
    }
}
