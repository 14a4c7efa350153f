//! Temporal expression scanning and normalization.
//!
//! Absolute expressions become point or interval anchors and are pushed onto a
//! per-chunk [`TimeStack`]. Relative expressions are resolved against the most
//! recent absolute anchor using a fixed phrase table; everything else is static.

use once_cell::sync::Lazy;
use regex::Regex;

use crate::model::{
    civil_from_days, days_from_civil, days_in_month, AnchorSpan, Granularity, TimeAnchor,
};

const MONTH: &str = r"(?:jan(?:uary)?|feb(?:ruary)?|mar(?:ch)?|apr(?:il)?|may|june?|july?|aug(?:ust)?|sep(?:t(?:ember)?)?|oct(?:ober)?|nov(?:ember)?|dec(?:ember)?)\.?";
const YEAR: &str = r"(?:1[5-9]\d{2}|20\d{2})";
const NUMBER: &str = r"(?:\d{1,2}|a|an|one|two|three|four|five|six|seven|eight|nine|ten|eleven|twelve)";

fn date_forms() -> String {
    let day = r"(?:[0-3]?\d)(?:st|nd|rd|th)?";
    [
        format!(r"{YEAR}-[01]\d-[0-3]\d"),
        format!(r"{MONTH}\s+{day},?\s+{YEAR}"),
        format!(r"(?:the\s+)?{day}\s+(?:of\s+)?{MONTH},?\s+{YEAR}"),
        format!(r"{MONTH},?\s+(?:of\s+)?{YEAR}"),
        YEAR.to_string(),
    ]
    .join("|")
}

fn relative_forms() -> String {
    [
        r"(?:earlier|later|early|late)\s+(?:in\s+)?(?:that|the\s+same)\s+(?:year|month)".to_string(),
        r"(?:in\s+)?(?:that|the\s+same)\s+(?:same\s+)?(?:year|month|day)".to_string(),
        r"(?:the\s+)?(?:following|next|previous|preceding)\s+year".to_string(),
        r"the\s+year\s+(?:before|after)".to_string(),
        format!(r"{NUMBER}\s+(?:years?|months?)\s+(?:later|after(?:wards)?|earlier|before|prior)"),
        r"recently|currently|nowadays|at\s+present|formerly|once|previously|later|earlier".to_string(),
    ]
    .join("|")
}

static SCANNER: Lazy<Regex> = Lazy::new(|| {
    let dates = date_forms();
    let pattern = format!(
        r"(?i)\b(?:(?:from|between)\s+(?:{dates})\s+(?:to|and|until|through)\s+(?:{dates})|{YEAR}\s*[–—-]\s*{YEAR}|{dates}|{rel})\b",
        rel = relative_forms()
    );
    Regex::new(&pattern).expect("scanner regex")
});

/// Temporal expressions in `text`, in order of appearance, non-overlapping.
pub fn find_expressions(text: &str) -> Vec<String> {
    SCANNER
        .find_iter(text)
        .map(|m| m.as_str().to_string())
        .collect()
}

/// Most recent absolute anchors seen in a chunk, most recent last.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeStack {
    entries: Vec<(usize, TimeAnchor)>,
}

impl TimeStack {
    pub fn new() -> Self {
        Self::default()
    }

    /// Pushes an absolute anchor; static anchors are ignored.
    pub fn push(&mut self, position: usize, anchor: TimeAnchor) {
        if anchor.is_static() {
            return;
        }
        debug_assert!(self.entries.last().is_none_or(|(p, _)| *p <= position));
        self.entries.push((position, anchor));
    }

    pub fn top(&self) -> Option<&TimeAnchor> {
        self.entries.last().map(|(_, a)| a)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, TimeAnchor)] {
        &self.entries
    }
}

fn month_number(name: &str) -> Option<u32> {
    let key: String = name
        .trim_end_matches('.')
        .chars()
        .take(3)
        .collect::<String>()
        .to_lowercase();
    let idx = [
        "jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec",
    ]
    .iter()
    .position(|m| *m == key)?;
    Some(idx as u32 + 1)
}

fn small_number(word: &str) -> Option<i32> {
    let w = word.to_lowercase();
    if let Ok(n) = w.parse::<i32>() {
        return Some(n);
    }
    let words = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
        "eleven", "twelve",
    ];
    match w.as_str() {
        "a" | "an" => Some(1),
        _ => words.iter().position(|x| *x == w).map(|i| i as i32),
    }
}

static ISO_DAY: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"^(\d{4})-(\d{2})-(\d{2})$").expect("iso regex"));
static MONTH_DAY_YEAR: Lazy<Regex> = Lazy::new(|| {
    Regex::new(&format!(
        r"(?i)^({MONTH})\s+(\d{{1,2}})(?:st|nd|rd|th)?,?\s+({YEAR})$"
    ))
    .expect("mdy regex")
});
static DAY_MONTH_YEAR: Lazy<Regex> = Lazy::new(|| {
    Regex::new(&format!(
        r"(?i)^(?:the\s+)?(\d{{1,2}})(?:st|nd|rd|th)?\s+(?:of\s+)?({MONTH}),?\s+({YEAR})$"
    ))
    .expect("dmy regex")
});
static MONTH_YEAR: Lazy<Regex> = Lazy::new(|| {
    Regex::new(&format!(r"(?i)^({MONTH}),?\s+(?:of\s+)?({YEAR})$")).expect("my regex")
});
static YEAR_ONLY: Lazy<Regex> =
    Lazy::new(|| Regex::new(&format!(r"^({YEAR})$")).expect("year regex"));
static INTERVAL: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?i)^(?:from|between)\s+(.+?)\s+(?:to|and|until|through)\s+(.+)$")
        .expect("interval regex")
});
static YEAR_RANGE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(&format!(r"^({YEAR})\s*[–—-]\s*({YEAR})$")).expect("range regex")
});

/// Parses a single absolute date expression into a point anchor.
fn parse_point(expr: &str) -> Option<TimeAnchor> {
    let expr = expr.trim();
    let build = |y: i32, m: u32, d: u32, g: Granularity| {
        days_from_civil(y, m, d)
            .ok()
            .map(|day| TimeAnchor::point(day, g, expr))
    };
    if let Some(c) = ISO_DAY.captures(expr) {
        return build(c[1].parse().ok()?, c[2].parse().ok()?, c[3].parse().ok()?, Granularity::Day);
    }
    if let Some(c) = MONTH_DAY_YEAR.captures(expr) {
        return build(c[3].parse().ok()?, month_number(&c[1])?, c[2].parse().ok()?, Granularity::Day);
    }
    if let Some(c) = DAY_MONTH_YEAR.captures(expr) {
        return build(c[3].parse().ok()?, month_number(&c[2])?, c[1].parse().ok()?, Granularity::Day);
    }
    if let Some(c) = MONTH_YEAR.captures(expr) {
        return build(c[2].parse().ok()?, month_number(&c[1])?, 1, Granularity::Month);
    }
    if let Some(c) = YEAR_ONLY.captures(expr) {
        return build(c[1].parse().ok()?, 1, 1, Granularity::Year);
    }
    None
}

fn interval_of(start: &TimeAnchor, end: &TimeAnchor, surface: &str) -> Option<TimeAnchor> {
    let g = match (start.granularity()?, end.granularity()?) {
        (a, b) if a.fineness() <= b.fineness() => a,
        (_, b) => b,
    };
    TimeAnchor::interval(start.index_day()?, end.index_day()?, g, surface).ok()
}

/// Parses an absolute expression (point, interval or year range).
pub fn parse_absolute(expr: &str) -> Option<TimeAnchor> {
    let expr = expr.trim();
    if let Some(c) = INTERVAL.captures(expr) {
        let (a, b) = (parse_point(&c[1])?, parse_point(&c[2])?);
        return interval_of(&a, &b, expr);
    }
    if let Some(c) = YEAR_RANGE.captures(expr) {
        let (a, b) = (parse_point(&c[1])?, parse_point(&c[2])?);
        return interval_of(&a, &b, expr);
    }
    parse_point(expr)
}

fn shift_months(day: i64, months: i32) -> i64 {
    let (y, m, d) = civil_from_days(day);
    let total = y * 12 + (m as i32 - 1) + months;
    let (ny, nm) = (total.div_euclid(12), total.rem_euclid(12) as u32 + 1);
    let nd = d.min(days_in_month(ny, nm));
    days_from_civil(ny, nm, nd).expect("clamped date is valid")
}

static REL_SAME_YEAR: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?i)^(?:(?:earlier|later|early|late)\s+)?(?:in\s+)?(?:that|the\s+same)\s+(?:same\s+)?year$")
        .expect("regex")
});
static REL_SAME_MONTH: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?i)^(?:(?:earlier|later|early|late)\s+)?(?:in\s+)?(?:that|the\s+same)\s+(?:same\s+)?month$")
        .expect("regex")
});
static REL_SAME_DAY: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?i)^(?:on\s+)?(?:that|the\s+same)\s+(?:same\s+)?day$").expect("regex")
});
static REL_NEXT_YEAR: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?i)^(?:(?:the\s+)?(?:following|next)\s+year|the\s+year\s+after)$").expect("regex")
});
static REL_PREV_YEAR: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?i)^(?:(?:the\s+)?(?:previous|preceding)\s+year|the\s+year\s+before)$")
        .expect("regex")
});
static REL_OFFSET: Lazy<Regex> = Lazy::new(|| {
    Regex::new(&format!(
        r"(?i)^({NUMBER})\s+(years?|months?)\s+(later|after|afterwards|earlier|before|prior)$"
    ))
    .expect("regex")
});

/// Resolves a relative expression against a reference anchor using the phrase table.
///
/// `that year` forms give the reference's year; `that month` its month (or year
/// when the reference is year-level); `N years/months later|earlier` shift the
/// reference and keep its granularity.
pub fn resolve_relative(expr: &str, reference: &TimeAnchor) -> Option<TimeAnchor> {
    let expr = expr.trim();
    let base = reference.index_day()?;
    let g = reference.granularity()?;
    let (y, m, _) = civil_from_days(base);
    let point = |day: i64, g: Granularity| Some(TimeAnchor::point(day, g, expr));

    if REL_SAME_YEAR.is_match(expr) {
        return point(days_from_civil(y, 1, 1).ok()?, Granularity::Year);
    }
    if REL_SAME_MONTH.is_match(expr) {
        return match g {
            Granularity::Year => point(days_from_civil(y, 1, 1).ok()?, Granularity::Year),
            _ => point(days_from_civil(y, m, 1).ok()?, Granularity::Month),
        };
    }
    if REL_SAME_DAY.is_match(expr) {
        return point(base, g);
    }
    if REL_NEXT_YEAR.is_match(expr) {
        return point(days_from_civil(y + 1, 1, 1).ok()?, Granularity::Year);
    }
    if REL_PREV_YEAR.is_match(expr) {
        return point(days_from_civil(y - 1, 1, 1).ok()?, Granularity::Year);
    }
    if let Some(c) = REL_OFFSET.captures(expr) {
        let n = small_number(&c[1])?;
        let sign = match c[3].to_lowercase().as_str() {
            "later" | "after" | "afterwards" => 1,
            _ => -1,
        };
        let months = if c[2].to_lowercase().starts_with("year") {
            12 * n
        } else {
            n
        };
        let g = if months % 12 != 0 && g == Granularity::Year {
            Granularity::Month
        } else {
            g
        };
        return point(shift_months(base, sign * months), g);
    }
    None
}

/// Normalizes one expression. Absolute anchors are pushed onto `stack` at
/// `position`; relative ones resolve against the stack top; anything else is static.
pub fn normalize_time(expr: &str, stack: &mut TimeStack, position: usize) -> TimeAnchor {
    if let Some(anchor) = parse_absolute(expr) {
        stack.push(position, anchor.clone());
        return anchor;
    }
    if let Some(resolved) = stack.top().and_then(|top| resolve_relative(expr, top)) {
        return resolved;
    }
    TimeAnchor::static_anchor(expr.trim())
}

/// Chooses the anchor for a candidate from all its expressions.
///
/// The finest-grained absolute anchor wins (first on ties). Without one, the
/// first resolvable relative expression is used, otherwise the anchor is static.
pub fn anchor_for_expressions(
    exprs: &[String],
    stack: &mut TimeStack,
    position: usize,
) -> TimeAnchor {
    let mut best_absolute: Option<TimeAnchor> = None;
    let mut first_relative: Option<TimeAnchor> = None;
    for expr in exprs {
        let is_absolute = parse_absolute(expr).is_some();
        let anchor = normalize_time(expr, stack, position);
        if anchor.is_static() {
            continue;
        }
        if is_absolute {
            let finer = match &best_absolute {
                None => true,
                Some(b) => {
                    anchor.granularity().map(Granularity::fineness)
                        < b.granularity().map(Granularity::fineness)
                }
            };
            if finer {
                best_absolute = Some(anchor);
            }
        } else if first_relative.is_none() {
            first_relative = Some(anchor);
        }
    }
    best_absolute
        .or(first_relative)
        .unwrap_or_else(|| TimeAnchor::static_anchor(exprs.join("; ")))
}

/// True when the anchor is absolute with month precision or finer.
pub fn has_month_precision(anchor: &TimeAnchor) -> bool {
    !matches!(anchor.span(), AnchorSpan::Static)
        && anchor
            .granularity()
            .is_some_and(|g| g.fineness() <= Granularity::Month.fineness())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(y: i32, m: u32, d: u32) -> i64 {
        days_from_civil(y, m, d).unwrap()
    }

    #[test]
    fn month_year_on_empty_stack() {
        let mut stack = TimeStack::new();
        let a = normalize_time("March 2008", &mut stack, 0);
        assert_eq!(
            a.span(),
            AnchorSpan::Point {
                day: day(2008, 3, 1),
                granularity: Granularity::Month
            }
        );
        assert_eq!(stack.len(), 1);
    }

    #[test]
    fn interval_keeps_span_indexes_start() {
        let mut stack = TimeStack::new();
        let a = normalize_time("from 2010 to 2015", &mut stack, 0);
        assert_eq!(
            a.span(),
            AnchorSpan::Interval {
                start: day(2010, 1, 1),
                end: day(2015, 1, 1),
                granularity: Granularity::Year
            }
        );
        assert_eq!(a.index_day(), Some(day(2010, 1, 1)));
        assert_eq!(stack.len(), 1);
    }

    #[test]
    fn earlier_that_year_uses_stack_top() {
        let mut stack = TimeStack::new();
        stack.push(0, TimeAnchor::point(day(2008, 3, 1), Granularity::Month, "March 2008"));
        let a = normalize_time("earlier that year", &mut stack, 1);
        assert_eq!(
            a.span(),
            AnchorSpan::Point {
                day: day(2008, 1, 1),
                granularity: Granularity::Year
            }
        );
        // relative resolutions are not pushed
        assert_eq!(stack.len(), 1);
    }

    #[test]
    fn recently_is_static() {
        let mut stack = TimeStack::new();
        assert!(normalize_time("recently", &mut stack, 0).is_static());
        assert!(stack.is_empty());
        // unresolvable relative phrase without a reference
        assert!(normalize_time("earlier that year", &mut stack, 0).is_static());
    }

    #[test]
    fn day_forms() {
        for expr in ["2021-06-15", "June 15, 2021", "15 June 2021", "the 15th of June 2021"] {
            let a = parse_absolute(expr).unwrap_or_else(|| panic!("{expr}"));
            assert_eq!(
                a.span(),
                AnchorSpan::Point {
                    day: day(2021, 6, 15),
                    granularity: Granularity::Day
                },
                "{expr}"
            );
        }
        assert!(parse_absolute("February 30, 2021").is_none());
    }

    #[test]
    fn year_offsets() {
        let top = TimeAnchor::point(day(2008, 3, 1), Granularity::Month, "March 2008");
        let a = resolve_relative("two years later", &top).unwrap();
        assert_eq!(a.index_day(), Some(day(2010, 3, 1)));
        assert_eq!(a.granularity(), Some(Granularity::Month));
        let b = resolve_relative("3 months earlier", &top).unwrap();
        assert_eq!(b.index_day(), Some(day(2007, 12, 1)));
        let c = resolve_relative("the following year", &top).unwrap();
        assert_eq!(c.index_day(), Some(day(2009, 1, 1)));
        assert_eq!(c.granularity(), Some(Granularity::Year));
        let leap = TimeAnchor::point(day(2008, 2, 29), Granularity::Day, "");
        assert_eq!(
            resolve_relative("a year later", &leap).unwrap().index_day(),
            Some(day(2009, 2, 28))
        );
    }

    #[test]
    fn that_month_on_year_reference_falls_back_to_year() {
        let top = TimeAnchor::point(day(2008, 1, 1), Granularity::Year, "2008");
        let a = resolve_relative("later that month", &top).unwrap();
        assert_eq!(a.granularity(), Some(Granularity::Year));
    }

    #[test]
    fn scanner_finds_expressions_in_order() {
        let text = "Obama became president in January 2009. From 2010 to 2015 he served; \
                    two years later, on January 20, 2017, he left. Recently he wrote a book.";
        assert_eq!(
            find_expressions(text),
            vec![
                "January 2009",
                "From 2010 to 2015",
                "two years later",
                "January 20, 2017",
                "Recently"
            ]
        );
        assert_eq!(find_expressions("He played 1998–2003 there."), vec!["1998–2003"]);
        assert!(find_expressions("The weather is often discussed.").is_empty());
    }

    #[test]
    fn finest_absolute_wins() {
        let mut stack = TimeStack::new();
        let exprs = vec!["2009".to_string(), "January 20, 2009".to_string()];
        let a = anchor_for_expressions(&exprs, &mut stack, 0);
        assert_eq!(a.granularity(), Some(Granularity::Day));
        let none = anchor_for_expressions(&[], &mut stack, 1);
        assert!(none.is_static());
    }
}
