//! Token-overlap answer scoring and benchmark reports.

use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingestion::{read_jsonl, IngestError};

pub const METRIC_DEFINITION: &str = "accuracy = |pred ∩ gold| / |pred|, recall = |pred ∩ gold| / |gold| over case-folded, \
punctuation-stripped whitespace tokens (multiset overlap); the gold with the highest recall, then accuracy, is used; \
exact_match = token sequences equal for some gold";

/// Case-folds, strips punctuation and splits on whitespace.
pub fn score_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn overlap(a: &[String], b: &[String]) -> usize {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in a {
        *counts.entry(t).or_default() += 1;
    }
    b.iter()
        .filter(|t| match counts.get_mut(t.as_str()) {
            Some(n) if *n > 0 => {
                *n -= 1;
                true
            }
            _ => false,
        })
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub accuracy: f64,
    pub recall: f64,
    pub exact_match: bool,
    /// Index of the gold answer the scores refer to.
    pub best_gold: usize,
}

/// Scores `prediction` against the gold answer with the best recall, ties
/// going to the better accuracy and then the earlier gold.
pub fn token_metrics(prediction: &str, golds: &[String]) -> TokenScore {
    assert!(!golds.is_empty(), "token_metrics needs at least one gold answer");
    let pred = score_tokens(prediction);
    let mut best: Option<(f64, f64, usize)> = None;
    let mut exact = false;
    for (i, g) in golds.iter().enumerate() {
        let gold = score_tokens(g);
        exact |= !pred.is_empty() && pred == gold;
        let o = overlap(&pred, &gold) as f64;
        let acc = if pred.is_empty() { 0.0 } else { o / pred.len() as f64 };
        let rec = if gold.is_empty() { 0.0 } else { o / gold.len() as f64 };
        if best.is_none_or(|(r, a, _)| rec > r || (rec == r && acc > a)) {
            best = Some((rec, acc, i));
        }
    }
    let (recall, accuracy, best_gold) = best.expect("non-empty golds");
    TokenScore {
        accuracy,
        recall,
        exact_match: exact,
        best_gold,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaItem {
    pub question: String,
    #[serde(rename = "answers")]
    pub gold_answers: Vec<String>,
    #[serde(default, rename = "type", skip_serializing_if = "Option::is_none")]
    pub question_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
}

impl QaItem {
    pub fn validate(&self) -> Result<(), String> {
        if self.question.trim().is_empty() {
            return Err("empty question".into());
        }
        if self.gold_answers.is_empty() || self.gold_answers.iter().any(|a| a.trim().is_empty()) {
            return Err(format!("question {:?} needs non-empty gold answers", self.question));
        }
        Ok(())
    }
}

pub fn read_qa(path: &Path) -> Result<Vec<QaItem>, IngestError> {
    let items: Vec<QaItem> = read_jsonl(path)?;
    for (i, it) in items.iter().enumerate() {
        it.validate().map_err(|message| IngestError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message,
        })?;
    }
    Ok(items)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub question: String,
    pub prediction: String,
    pub best_gold: String,
    pub accuracy: f64,
    pub recall: f64,
    pub exact_match: bool,
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub query_time_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub index_time_seconds: f64,
    pub mean_query_time_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric_definition: String,
    pub items: Vec<ItemResult>,
    pub mean_accuracy: f64,
    pub mean_recall: f64,
    pub exact_match_rate: f64,
    pub failed_items: usize,
    pub timing: Timing,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

impl EvalReport {
    pub fn from_items(items: Vec<ItemResult>, index_time_seconds: f64) -> Self {
        EvalReport {
            metric_definition: METRIC_DEFINITION.to_string(),
            mean_accuracy: mean(items.iter().map(|r| r.accuracy)),
            mean_recall: mean(items.iter().map(|r| r.recall)),
            exact_match_rate: mean(items.iter().map(|r| f64::from(u8::from(r.exact_match)))),
            failed_items: items.iter().filter(|r| r.failed).count(),
            timing: Timing {
                index_time_seconds,
                mean_query_time_seconds: mean(items.iter().map(|r| r.query_time_seconds)),
            },
            items,
        }
    }

    /// Plain-text summary table.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<4} {:>8} {:>8} {:>5} {:>6}  question\n", "#", "accuracy", "recall", "em", "failed"));
        for (i, r) in self.items.iter().enumerate() {
            out.push_str(&format!(
                "{:<4} {:>8.4} {:>8.4} {:>5} {:>6}  {}\n",
                i + 1,
                r.accuracy,
                r.recall,
                if r.exact_match { "yes" } else { "no" },
                if r.failed { "yes" } else { "no" },
                r.question
            ));
        }
        out.push_str(&format!(
            "mean accuracy {:.4}  mean recall {:.4}  exact match {:.4}  items {}  failed {}\n",
            self.mean_accuracy,
            self.mean_recall,
            self.exact_match_rate,
            self.items.len(),
            self.failed_items
        ));
        out.push_str(&format!(
            "index time {:.3} s  mean query time {:.3} s\n",
            self.timing.index_time_seconds, self.timing.mean_query_time_seconds
        ));
        out
    }
}

/// Answers every item with `answer` on up to `concurrency` threads and scores
/// the results in item order. Failed items score zero and are flagged.
pub fn evaluate_items<F>(items: &[QaItem], concurrency: usize, index_time_seconds: f64, answer: F) -> EvalReport
where
    F: Fn(&QaItem) -> Result<String, String> + Sync,
{
    if items.is_empty() {
        warn!("no QA items to evaluate");
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency.max(1))
        .build()
        .expect("thread pool");
    let rows: Vec<ItemResult> = pool.install(|| {
        items
            .par_iter()
            .map(|it| {
                let start = Instant::now();
                let out = answer(it);
                let secs = start.elapsed().as_secs_f64();
                match out {
                    Ok(prediction) => {
                        let s = token_metrics(&prediction, &it.gold_answers);
                        ItemResult {
                            question: it.question.clone(),
                            prediction,
                            best_gold: it.gold_answers[s.best_gold].clone(),
                            accuracy: s.accuracy,
                            recall: s.recall,
                            exact_match: s.exact_match,
                            failed: false,
                            error: None,
                            query_time_seconds: secs,
                        }
                    }
                    Err(e) => {
                        warn!("question failed: {:?}: {e}", it.question);
                        ItemResult {
                            question: it.question.clone(),
                            prediction: String::new(),
                            best_gold: it.gold_answers[0].clone(),
                            accuracy: 0.0,
                            recall: 0.0,
                            exact_match: false,
                            failed: true,
                            error: Some(e),
                            query_time_seconds: secs,
                        }
                    }
                }
            })
            .collect()
    });
    EvalReport::from_items(rows, index_time_seconds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn hand_checked_metrics() {
        let s = token_metrics("S.S. Lazio", &g(&["S.S. Lazio"]));
        assert_eq!((s.accuracy, s.recall, s.exact_match), (1.0, 1.0, true));
        let s = token_metrics("the Lazio club", &g(&["Lazio"]));
        assert_eq!((s.accuracy, s.recall), (1.0 / 3.0, 1.0));
        assert!(!s.exact_match);
        let s = token_metrics("", &g(&["Lazio"]));
        assert_eq!((s.accuracy, s.recall), (0.0, 0.0));
    }

    #[test]
    fn best_gold_by_recall_then_accuracy() {
        let s = token_metrics("Roma and Lazio", &g(&["Juventus", "AS Roma", "Lazio"]));
        assert_eq!(s.best_gold, 2);
        assert_eq!((s.accuracy, s.recall), (1.0 / 3.0, 1.0));
        let s = token_metrics("a a b", &g(&["a a", "a"]));
        // both have recall 1; "a a" overlaps twice
        assert_eq!(s.best_gold, 0);
        assert_eq!(s.accuracy, 2.0 / 3.0);
    }

    #[test]
    fn multiset_overlap() {
        let s = token_metrics("la la la", &g(&["la"]));
        assert_eq!((s.accuracy, s.recall), (1.0 / 3.0, 1.0));
    }

    #[test]
    fn report_aggregates_and_failures() {
        let items = vec![
            QaItem { question: "q1".into(), gold_answers: g(&["Lazio"]), question_type: None, dataset: None },
            QaItem { question: "q2".into(), gold_answers: g(&["Roma"]), question_type: None, dataset: None },
            QaItem { question: "q3".into(), gold_answers: g(&["x y"]), question_type: None, dataset: None },
        ];
        let r = evaluate_items(&items, 4, 1.5, |it| match it.question.as_str() {
            "q1" => Ok("Lazio".into()),
            "q2" => Err("gateway down".into()),
            _ => Ok("x".into()),
        });
        assert_eq!(r.failed_items, 1);
        assert!(r.items[1].failed && r.items[1].recall == 0.0);
        assert_eq!(r.mean_recall, (1.0 + 0.0 + 0.5) / 3.0);
        assert_eq!(r.mean_accuracy, (1.0 + 0.0 + 1.0) / 3.0);
        assert_eq!(r.timing.index_time_seconds, 1.5);
        assert!(r.summary().contains("mean recall 0.5000"));

        let empty = evaluate_items(&[], 2, 0.0, |_| Ok(String::new()));
        assert_eq!((empty.mean_accuracy, empty.mean_recall, empty.items.len()), (0.0, 0.0, 0));
    }

    #[test]
    fn qa_lines_parse_and_validate() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("qa.jsonl");
        std::fs::write(&p, "{\"question\":\"Who?\",\"answers\":[\"Rossi\"],\"type\":\"other\"}\n").unwrap();
        let items = read_qa(&p).unwrap();
        assert_eq!(items[0].question_type.as_deref(), Some("other"));
        std::fs::write(&p, "{\"question\":\"Who?\",\"answers\":[]}\n").unwrap();
        assert!(matches!(read_qa(&p), Err(IngestError::Parse { line: 1, .. })));
    }
}
