use std::path::PathBuf;

use eventrag::generation::{assemble_prompt, extract_answer, generate_answer};
use eventrag::gateway::ModelGateway;
use eventrag::model::{days_from_civil, Granularity, TimeAnchor};
use eventrag::retrieval::{EventTimeline, QueryPlan, QuestionClass, TimelineEntry};
use eventrag::text::WhitespaceTokenizer;

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn check_golden(name: &str, actual: &str) {
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden {}", path.display()));
    assert_eq!(actual, expected, "golden {name} differs; rerun with UPDATE_GOLDEN=1 to refresh");
}

fn entry(id: &str, anchor: TimeAnchor, sentence: &str) -> TimelineEntry {
    TimelineEntry {
        event_id: id.into(),
        anchor,
        sentence: sentence.into(),
    }
}

fn continuity_case() -> (QueryPlan, EventTimeline) {
    let day = |y, m, d| days_from_civil(y, m, d).unwrap();
    let timeline = EventTimeline::from_priority(vec![
        entry(
            "rossi:0002",
            TimeAnchor::interval(day(2004, 1, 1), day(2008, 1, 1), Granularity::Year, "from 2004 to 2008").unwrap(),
            "Marco Rossi played for S.S. Lazio from 2004 to 2008.",
        ),
        entry(
            "rossi:0001",
            TimeAnchor::point(day(2001, 3, 1), Granularity::Month, "March 2001"),
            "Marco Rossi joined AS Roma in March 2001.",
        ),
        entry("rossi:0000", TimeAnchor::static_anchor(""), "Marco Rossi is an Italian footballer."),
        entry(
            "rossi:0003",
            TimeAnchor::point(day(2010, 7, 1), Granularity::Month, "July 2010"),
            "Marco Rossi moved to Juventus in July 2010.",
        ),
    ]);
    let plan = QueryPlan {
        question: "Which team did Marco Rossi play for in May 2006?".into(),
        t_q: Some(TimeAnchor::point(day(2006, 5, 1), Granularity::Month, "May 2006")),
        lambda: 0.3,
        question_class: QuestionClass::Continuity,
    };
    (plan, timeline)
}

#[test]
fn continuity_prompt_matches_golden() {
    let (plan, mut timeline) = continuity_case();
    let prompt = assemble_prompt(&plan, &mut timeline, 16_384, &WhitespaceTokenizer).unwrap();
    check_golden("time_cot_continuity.txt", &prompt.full_text());
}

#[test]
fn mock_answer_for_continuity_prompt() {
    let (plan, mut timeline) = continuity_case();
    let prompt = assemble_prompt(&plan, &mut timeline, 16_384, &WhitespaceTokenizer).unwrap();
    let gw = ModelGateway::mock(64);
    let out = generate_answer(&prompt, &gw).unwrap();
    assert_eq!(out.answer, "Marco Rossi played for S.S. Lazio from 2004 to 2008.");
    assert!(!out.marker_missing);
    // every cited event line is in the timeline
    for line in out.raw_reasoning.lines().filter(|l| l.starts_with("Evidence: ")) {
        let cited = line.trim_start_matches("Evidence: ");
        assert!(timeline.rendered.lines().any(|l| l == cited), "{cited}");
    }
    assert_eq!(extract_answer(&out.raw_reasoning).as_deref(), Some(out.answer.as_str()));
}

#[test]
fn empty_timeline_prompt_matches_golden() {
    let (plan, _) = continuity_case();
    let mut empty = EventTimeline::from_priority(Vec::new());
    let prompt = assemble_prompt(&plan, &mut empty, 16_384, &WhitespaceTokenizer).unwrap();
    check_golden("time_cot_empty.txt", &prompt.full_text());
}
