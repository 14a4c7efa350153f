//! Domain types shared across the pipeline: time anchors, event units, chunks.
//!
//! Dates are integer day numbers counted from 1970-01-01 in the proleptic
//! Gregorian calendar. Anchors coarser than a day are snapped to the first day
//! of their period so that ordering and distances stay exact.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid calendar date {year:04}-{month:02}-{day:02}")]
    InvalidDate { year: i32, month: u32, day: u32 },
    #[error("invalid time anchor: {0}")]
    InvalidAnchor(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Day,
    Month,
    Year,
}

impl Granularity {
    /// Rank where a smaller value means a finer resolution.
    pub fn fineness(self) -> u8 {
        match self {
            Granularity::Day => 0,
            Granularity::Month => 1,
            Granularity::Year => 2,
        }
    }
}

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("epoch")
}

/// Day number of a civil date.
pub fn days_from_civil(year: i32, month: u32, day: u32) -> Result<i64, ModelError> {
    NaiveDate::from_ymd_opt(year, month, day)
        .map(|d| (d - epoch()).num_days())
        .ok_or(ModelError::InvalidDate { year, month, day })
}

/// Civil date `(year, month, day)` of a day number.
pub fn civil_from_days(day: i64) -> (i32, u32, u32) {
    let d = epoch() + chrono::Duration::days(day);
    (d.year(), d.month(), d.day())
}

/// Number of days in `month` of `year`.
pub fn days_in_month(year: i32, month: u32) -> u32 {
    let (ny, nm) = if month == 12 { (year + 1, 1) } else { (year, month + 1) };
    let next = NaiveDate::from_ymd_opt(ny, nm, 1).expect("valid month");
    let this = NaiveDate::from_ymd_opt(year, month, 1).expect("valid month");
    (next - this).num_days() as u32
}

/// First day of the period containing `day` at the given granularity.
pub fn snap_to_granularity(day: i64, granularity: Granularity) -> i64 {
    let (y, m, _) = civil_from_days(day);
    match granularity {
        Granularity::Day => day,
        Granularity::Month => days_from_civil(y, m, 1).expect("valid"),
        Granularity::Year => days_from_civil(y, 1, 1).expect("valid"),
    }
}

/// Exclusive end day of the period that starts at `start`.
pub fn period_end(start: i64, granularity: Granularity) -> i64 {
    let (y, m, _) = civil_from_days(start);
    match granularity {
        Granularity::Day => start + 1,
        Granularity::Month => start + i64::from(days_in_month(y, m)),
        Granularity::Year => days_from_civil(y + 1, 1, 1).expect("valid"),
    }
}

/// Render a day number at a granularity: `YYYY`, `YYYY-MM` or `YYYY-MM-DD`.
pub fn format_day(day: i64, granularity: Granularity) -> String {
    let (y, m, d) = civil_from_days(day);
    match granularity {
        Granularity::Day => format!("{y:04}-{m:02}-{d:02}"),
        Granularity::Month => format!("{y:04}-{m:02}"),
        Granularity::Year => format!("{y:04}"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnchorSpan {
    Point {
        day: i64,
        granularity: Granularity,
    },
    /// `end` is the first day of the closing period, so "from 2010 to 2015"
    /// spans 2010-01-01 to 2015-01-01.
    Interval {
        start: i64,
        end: i64,
        granularity: Granularity,
    },
    Static,
}

/// Normalized temporal reference of an event.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "AnchorRecord", into = "AnchorRecord")]
pub struct TimeAnchor {
    span: AnchorSpan,
    surface_text: String,
}

impl TimeAnchor {
    pub fn point(day: i64, granularity: Granularity, surface: impl Into<String>) -> Self {
        TimeAnchor {
            span: AnchorSpan::Point {
                day: snap_to_granularity(day, granularity),
                granularity,
            },
            surface_text: surface.into(),
        }
    }

    pub fn interval(
        start: i64,
        end: i64,
        granularity: Granularity,
        surface: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let start = snap_to_granularity(start, granularity);
        let end = snap_to_granularity(end, granularity);
        if end < start {
            return Err(ModelError::InvalidAnchor(format!(
                "interval end {end} precedes start {start}"
            )));
        }
        Ok(TimeAnchor {
            span: AnchorSpan::Interval {
                start,
                end,
                granularity,
            },
            surface_text: surface.into(),
        })
    }

    pub fn static_anchor(surface: impl Into<String>) -> Self {
        TimeAnchor {
            span: AnchorSpan::Static,
            surface_text: surface.into(),
        }
    }

    /// Point anchor from a civil date, snapped to `granularity`.
    pub fn from_ymd(
        year: i32,
        month: u32,
        day: u32,
        granularity: Granularity,
    ) -> Result<Self, ModelError> {
        let d = days_from_civil(year, month, day)?;
        let anchor = TimeAnchor::point(d, granularity, "");
        let label = anchor.timestamp_label();
        Ok(anchor.with_surface(label))
    }

    pub fn with_surface(mut self, surface: impl Into<String>) -> Self {
        self.surface_text = surface.into();
        self
    }

    pub fn span(&self) -> AnchorSpan {
        self.span
    }

    pub fn surface_text(&self) -> &str {
        &self.surface_text
    }

    pub fn is_static(&self) -> bool {
        matches!(self.span, AnchorSpan::Static)
    }

    pub fn granularity(&self) -> Option<Granularity> {
        match self.span {
            AnchorSpan::Point { granularity, .. } | AnchorSpan::Interval { granularity, .. } => {
                Some(granularity)
            }
            AnchorSpan::Static => None,
        }
    }

    /// The day used for indexing: the point itself, or an interval's earliest day.
    pub fn index_day(&self) -> Option<i64> {
        match self.span {
            AnchorSpan::Point { day, .. } => Some(day),
            AnchorSpan::Interval { start, .. } => Some(start),
            AnchorSpan::Static => None,
        }
    }

    /// Covered days as a half-open range `[start, end)`.
    pub fn coverage(&self) -> Option<(i64, i64)> {
        match self.span {
            AnchorSpan::Point { day, granularity } => Some((day, period_end(day, granularity))),
            AnchorSpan::Interval {
                start,
                end,
                granularity,
            } => Some((start, period_end(end, granularity))),
            AnchorSpan::Static => None,
        }
    }

    /// Same temporal span, ignoring the surface text.
    pub fn same_span(&self, other: &TimeAnchor) -> bool {
        self.span == other.span
    }

    /// Timeline label: `YYYY[-MM[-DD]]`, `start/end` for intervals, `static` otherwise.
    pub fn timestamp_label(&self) -> String {
        match self.span {
            AnchorSpan::Point { day, granularity } => format_day(day, granularity),
            AnchorSpan::Interval {
                start,
                end,
                granularity,
            } => format!(
                "{}/{}",
                format_day(start, granularity),
                format_day(end, granularity)
            ),
            AnchorSpan::Static => "static".to_string(),
        }
    }
}

/// Parses a label produced by [`TimeAnchor::timestamp_label`].
pub fn parse_timestamp_label(label: &str) -> Option<TimeAnchor> {
    let label = label.trim();
    if label == "static" {
        return Some(TimeAnchor::static_anchor(""));
    }
    if let Some((a, b)) = label.split_once('/') {
        let (a, b) = (parse_timestamp_label(a)?, parse_timestamp_label(b)?);
        let g = a.granularity()?;
        return TimeAnchor::interval(a.index_day()?, b.index_day()?, g, label).ok();
    }
    let parts: Vec<&str> = label.split('-').collect();
    let num = |s: &str| s.parse::<u32>().ok();
    let year: i32 = parts.first()?.parse().ok()?;
    let (m, d, g) = match parts.len() {
        1 => (1, 1, Granularity::Year),
        2 => (num(parts[1])?, 1, Granularity::Month),
        3 => (num(parts[1])?, num(parts[2])?, Granularity::Day),
        _ => return None,
    };
    let day = days_from_civil(year, m, d).ok()?;
    Some(TimeAnchor::point(day, g, label))
}

impl fmt::Display for TimeAnchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.timestamp_label())
    }
}

pub fn index_day(anchor: &TimeAnchor) -> Option<i64> {
    anchor.index_day()
}

/// Absolute difference of index days; `None` when either anchor is static.
pub fn day_distance(a: &TimeAnchor, b: &TimeAnchor) -> Option<u64> {
    Some(a.index_day()?.abs_diff(b.index_day()?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum AnchorKind {
    Point,
    Interval,
    Static,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AnchorRecord {
    kind: AnchorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    start_day: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    end_day: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    granularity: Option<Granularity>,
    #[serde(default)]
    surface_text: String,
}

impl From<TimeAnchor> for AnchorRecord {
    fn from(a: TimeAnchor) -> Self {
        let (kind, start_day, end_day, granularity) = match a.span {
            AnchorSpan::Point { day, granularity } => {
                (AnchorKind::Point, Some(day), None, Some(granularity))
            }
            AnchorSpan::Interval {
                start,
                end,
                granularity,
            } => (AnchorKind::Interval, Some(start), Some(end), Some(granularity)),
            AnchorSpan::Static => (AnchorKind::Static, None, None, None),
        };
        AnchorRecord {
            kind,
            start_day,
            end_day,
            granularity,
            surface_text: a.surface_text,
        }
    }
}

impl TryFrom<AnchorRecord> for TimeAnchor {
    type Error = ModelError;

    fn try_from(r: AnchorRecord) -> Result<Self, Self::Error> {
        let bad = |msg: &str| Err(ModelError::InvalidAnchor(msg.to_string()));
        let span = match (r.kind, r.start_day, r.end_day, r.granularity) {
            (AnchorKind::Static, None, None, None) => AnchorSpan::Static,
            (AnchorKind::Static, ..) => return bad("static anchor carries date fields"),
            (AnchorKind::Point, Some(day), None, Some(granularity)) => {
                AnchorSpan::Point { day, granularity }
            }
            (AnchorKind::Interval, Some(start), Some(end), Some(granularity)) => {
                if end < start {
                    return bad("interval end precedes start");
                }
                AnchorSpan::Interval {
                    start,
                    end,
                    granularity,
                }
            }
            _ => return bad("missing or extra fields for anchor kind"),
        };
        if let AnchorSpan::Point { day, granularity } = span {
            if snap_to_granularity(day, granularity) != day {
                return bad("day is not aligned to its granularity");
            }
        }
        if let AnchorSpan::Interval {
            start, granularity, ..
        } = span
        {
            if snap_to_granularity(start, granularity) != start {
                return bad("interval start is not aligned to its granularity");
            }
        }
        Ok(TimeAnchor {
            span,
            surface_text: r.surface_text,
        })
    }
}

/// Matching key for an entity mention: trimmed, case-folded, inner whitespace collapsed.
pub fn normalize_entity(surface: &str) -> String {
    surface
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Entity set keyed by normalized form; the first surface form seen is kept for display.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntitySet(BTreeMap<String, String>);

impl EntitySet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, surface: &str) -> bool {
        let key = normalize_entity(surface);
        if key.is_empty() || self.0.contains_key(&key) {
            return false;
        }
        self.0
            .insert(key, surface.split_whitespace().collect::<Vec<_>>().join(" "));
        true
    }

    pub fn contains(&self, surface: &str) -> bool {
        self.0.contains_key(&normalize_entity(surface))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.0.values().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn intersection_len(&self, other: &EntitySet) -> usize {
        self.0.keys().filter(|k| other.0.contains_key(*k)).count()
    }

    pub fn extend_from(&mut self, other: &EntitySet) {
        for (k, v) in &other.0 {
            self.0.entry(k.clone()).or_insert_with(|| v.clone());
        }
    }
}

impl<S: AsRef<str>> FromIterator<S> for EntitySet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut set = EntitySet::new();
        for s in iter {
            set.insert(s.as_ref());
        }
        set
    }
}

impl Serialize for EntitySet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.0.values())
    }
}

impl<'de> Deserialize<'de> for EntitySet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let surfaces = Vec::<String>::deserialize(deserializer)?;
        Ok(surfaces.iter().collect())
    }
}

/// Atomic retrieval unit: one self-contained, time-anchored statement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicEventUnit {
    pub event_id: String,
    pub source_id: String,
    pub sentence: String,
    pub anchor: TimeAnchor,
    pub entities: EntitySet,
    pub info_score: u8,
    #[serde(default)]
    pub chunk_index: usize,
}

impl DynamicEventUnit {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.sentence.trim().is_empty() {
            return Err(ModelError::InvalidAnchor(format!(
                "event {} has an empty sentence",
                self.event_id
            )));
        }
        if !(1..=4).contains(&self.info_score) {
            return Err(ModelError::InvalidAnchor(format!(
                "event {} has info score {} outside 1..=4",
                self.event_id, self.info_score
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub source_id: String,
    pub chunk_index: usize,
    pub title: String,
    /// Title line followed by the segment body.
    pub text: String,
    /// Tokens in the body, excluding the prepended title.
    pub token_count: usize,
}

impl Chunk {
    /// Segment text with the prepended title line removed.
    pub fn body(&self) -> &str {
        if self.title.is_empty() {
            return &self.text;
        }
        self.text
            .strip_prefix(self.title.as_str())
            .map(|rest| rest.strip_prefix('\n').unwrap_or(rest))
            .unwrap_or(&self.text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_is_zero() {
        let a = TimeAnchor::from_ymd(1970, 1, 1, Granularity::Day).unwrap();
        assert_eq!(index_day(&a), Some(0));
    }

    #[test]
    fn interval_indexes_on_start() {
        let a = TimeAnchor::interval(
            days_from_civil(2010, 1, 1).unwrap(),
            days_from_civil(2015, 1, 1).unwrap(),
            Granularity::Year,
            "from 2010 to 2015",
        )
        .unwrap();
        assert_eq!(index_day(&a), Some(14610));
        assert_eq!(a.timestamp_label(), "2010/2015");
    }

    #[test]
    fn static_has_no_index_day() {
        let s = TimeAnchor::static_anchor("recently");
        assert_eq!(index_day(&s), None);
        let p = TimeAnchor::from_ymd(2010, 1, 1, Granularity::Day).unwrap();
        assert_eq!(day_distance(&s, &p), None);
        assert_eq!(day_distance(&p, &s), None);
    }

    #[test]
    fn day_distance_examples() {
        let a = TimeAnchor::from_ymd(2008, 3, 1, Granularity::Day).unwrap();
        assert_eq!(day_distance(&a, &a.clone()), Some(0));
        let p = TimeAnchor::from_ymd(2010, 1, 1, Granularity::Day).unwrap();
        let i = TimeAnchor::interval(
            days_from_civil(2012, 1, 1).unwrap(),
            days_from_civil(2013, 1, 1).unwrap(),
            Granularity::Day,
            "",
        )
        .unwrap();
        assert_eq!(day_distance(&p, &i), Some(730));
    }

    #[test]
    fn coarse_granularity_snaps_to_period_start() {
        let a = TimeAnchor::from_ymd(2008, 3, 17, Granularity::Month).unwrap();
        assert_eq!(a.index_day(), Some(days_from_civil(2008, 3, 1).unwrap()));
        let y = TimeAnchor::from_ymd(2008, 3, 17, Granularity::Year).unwrap();
        assert_eq!(y.index_day(), Some(days_from_civil(2008, 1, 1).unwrap()));
        assert_eq!(y.timestamp_label(), "2008");
    }

    #[test]
    fn labels_parse_back() {
        for label in ["2013", "2013-05", "2013-05-17", "2012/2014", "static"] {
            let a = parse_timestamp_label(label).unwrap();
            assert_eq!(a.timestamp_label(), label);
        }
        assert!(parse_timestamp_label("2013-13").is_none());
    }

    #[test]
    fn inverted_interval_rejected() {
        assert!(TimeAnchor::interval(10, 5, Granularity::Day, "").is_err());
    }

    #[test]
    fn anchor_json_rejects_inconsistent_records() {
        let ok: TimeAnchor =
            serde_json::from_str(r#"{"kind":"static","surface_text":"recently"}"#).unwrap();
        assert!(ok.is_static());
        assert!(serde_json::from_str::<TimeAnchor>(r#"{"kind":"static","start_day":3}"#).is_err());
        assert!(serde_json::from_str::<TimeAnchor>(
            r#"{"kind":"interval","start_day":10,"end_day":5,"granularity":"day"}"#
        )
        .is_err());
        // 1970-01-02 is not the first of a month
        assert!(serde_json::from_str::<TimeAnchor>(
            r#"{"kind":"point","start_day":1,"granularity":"month"}"#
        )
        .is_err());
    }

    #[test]
    fn entity_set_canonicalizes() {
        let mut e = EntitySet::new();
        assert!(e.insert("  Barack   Obama "));
        assert!(!e.insert("barack obama"));
        assert_eq!(e.surfaces().collect::<Vec<_>>(), vec!["Barack Obama"]);
        assert!(e.contains("BARACK OBAMA"));
    }

    #[test]
    fn chunk_body_strips_title() {
        let c = Chunk {
            source_id: "d".into(),
            chunk_index: 0,
            title: "Title".into(),
            text: "Title\nbody text".into(),
            token_count: 2,
        };
        assert_eq!(c.body(), "body text");
    }
}
