use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::RetrievalError;
use crate::graph::{EventGraph, GraphError};
use crate::model::TimeAnchor;
use crate::text::Tokenizer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub event_id: String,
    pub anchor: TimeAnchor,
    pub sentence: String,
}

/// Static events first, then dated events in chronological order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventTimeline {
    pub static_entries: Vec<TimelineEntry>,
    pub temporal_entries: Vec<TimelineEntry>,
    pub rendered: String,
    /// Retained entries from most to least important.
    priority: Vec<TimelineEntry>,
    dropped: usize,
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl EventTimeline {
    /// Builds the timeline from entries ordered by importance.
    pub fn from_priority(priority: Vec<TimelineEntry>) -> Self {
        let mut t = EventTimeline {
            priority,
            ..Default::default()
        };
        t.layout();
        t
    }

    fn layout(&mut self) {
        let (stat, mut temp): (Vec<TimelineEntry>, Vec<TimelineEntry>) =
            self.priority.iter().cloned().partition(|e| e.anchor.is_static());
        temp.sort_by(|a, b| {
            (a.anchor.index_day(), &a.event_id).cmp(&(b.anchor.index_day(), &b.event_id))
        });
        self.rendered = stat
            .iter()
            .chain(&temp)
            .enumerate()
            .map(|(i, e)| {
                format!(
                    "Event # {} [{}]: {}",
                    i + 1,
                    e.anchor.timestamp_label(),
                    one_line(&e.sentence)
                )
            })
            .collect::<Vec<_>>()
            .join("\n");
        self.static_entries = stat;
        self.temporal_entries = temp;
    }

    pub fn len(&self) -> usize {
        self.priority.len()
    }

    pub fn is_empty(&self) -> bool {
        self.priority.is_empty()
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }

    /// Entries in rendered order.
    pub fn entries(&self) -> impl Iterator<Item = &TimelineEntry> {
        self.static_entries.iter().chain(&self.temporal_entries)
    }

    pub fn event_ids(&self) -> Vec<String> {
        self.entries().map(|e| e.event_id.clone()).collect()
    }

    /// Removes the least important entry. Returns false when already empty.
    pub fn drop_lowest(&mut self) -> bool {
        if self.priority.pop().is_none() {
            return false;
        }
        self.dropped += 1;
        self.layout();
        true
    }

    /// Drops entries until the rendered text fits `budget` tokens.
    pub fn fit(&mut self, budget: usize, tokenizer: &dyn Tokenizer) {
        while tokenizer.count(&self.rendered) > budget && self.drop_lowest() {}
    }
}

/// Unions path nodes into a timeline. Importance follows first appearance in
/// breadth order: every seed, then every first step, and so on, so the
/// nodes farthest from the seeds are dropped first when over budget.
pub fn build_timeline(
    graph: &EventGraph,
    paths: &[Vec<String>],
    token_budget: usize,
    tokenizer: &dyn Tokenizer,
) -> Result<EventTimeline, RetrievalError> {
    let depth = paths.iter().map(Vec::len).max().unwrap_or(0);
    let mut seen = BTreeSet::new();
    let mut priority = Vec::new();
    for d in 0..depth {
        for id in paths.iter().filter_map(|p| p.get(d)) {
            if !seen.insert(id.clone()) {
                continue;
            }
            let n = graph
                .node(id)
                .ok_or_else(|| GraphError::UnknownNode(id.clone()))?;
            priority.push(TimelineEntry {
                event_id: id.clone(),
                anchor: n.anchor.clone(),
                sentence: n.sentence.clone(),
            });
        }
    }
    let mut t = EventTimeline::from_priority(priority);
    t.fit(token_budget, tokenizer);
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::EncoderConfig;
    use crate::model::{DynamicEventUnit, Granularity};
    use crate::text::WhitespaceTokenizer;

    fn graph() -> EventGraph {
        let mut g = EventGraph::new(EncoderConfig::default(), 4);
        let items = [
            ("e08", Some(TimeAnchor::from_ymd(2008, 1, 1, Granularity::Year).unwrap()), "Obama won the election."),
            ("e13", Some(TimeAnchor::from_ymd(2013, 1, 1, Granularity::Year).unwrap()), "Obama began a second term."),
            ("e10", Some(TimeAnchor::from_ymd(2010, 3, 23, Granularity::Day).unwrap()), "Obama signed the act."),
            ("bg", None, "Obama is a lawyer."),
        ];
        for (id, a, s) in items {
            g.insert_node(DynamicEventUnit {
                event_id: id.into(),
                source_id: "obama".into(),
                sentence: s.into(),
                anchor: a.unwrap_or_else(|| TimeAnchor::static_anchor("")),
                entities: ["Obama"].iter().collect(),
                info_score: 1,
                chunk_index: 0,
            })
            .unwrap();
        }
        g
    }

    fn p(ids: &[&str]) -> Vec<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn chronological_with_static_first() {
        let g = graph();
        let t = build_timeline(&g, &[p(&["e08", "e13"]), p(&["e10", "bg", "e08"])], 1000, &WhitespaceTokenizer).unwrap();
        assert_eq!(
            t.rendered,
            "Event # 1 [static]: Obama is a lawyer.\n\
             Event # 2 [2008]: Obama won the election.\n\
             Event # 3 [2010-03-23]: Obama signed the act.\n\
             Event # 4 [2013]: Obama began a second term."
        );
        assert_eq!(t.len(), 4);
        assert_eq!(t.event_ids(), vec!["bg", "e08", "e10", "e13"]);
    }

    #[test]
    fn budget_drops_farthest_first() {
        let g = graph();
        let paths = [p(&["e08", "e13"]), p(&["e10", "bg"])];
        // the 2008 and 2010 lines are 8 whitespace tokens each
        let t = build_timeline(&g, &paths, 16, &WhitespaceTokenizer).unwrap();
        assert_eq!(t.event_ids(), vec!["e08", "e10"]);
        assert_eq!(t.dropped(), 2);
        let empty = build_timeline(&g, &paths, 0, &WhitespaceTokenizer).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.rendered, "");
    }

    #[test]
    fn unknown_node_is_an_error() {
        assert!(build_timeline(&graph(), &[p(&["nope"])], 10, &WhitespaceTokenizer).is_err());
    }
}
