//! Tokenization helpers shared by chunking, budgeting and lexical scoring.

use std::collections::BTreeSet;

/// Pluggable token counter used for chunk windows and context budgets.
pub trait Tokenizer: Send + Sync {
    /// Byte spans of each token in `text`, in order.
    fn token_spans(&self, text: &str) -> Vec<(usize, usize)>;

    fn count(&self, text: &str) -> usize {
        self.token_spans(text).len()
    }
}

/// One token per whitespace-separated word.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn token_spans(&self, text: &str) -> Vec<(usize, usize)> {
        let mut spans = Vec::new();
        let mut start = None;
        for (i, ch) in text.char_indices() {
            match (ch.is_whitespace(), start) {
                (true, Some(s)) => {
                    spans.push((s, i));
                    start = None;
                }
                (false, None) => start = Some(i),
                _ => {}
            }
        }
        if let Some(s) = start {
            spans.push((s, text.len()));
        }
        spans
    }

    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "an", "and", "any", "are", "as", "at", "be", "been",
    "before", "being", "between", "both", "but", "by", "can", "could", "did", "do", "does",
    "during", "each", "for", "from", "had", "has", "have", "he", "her", "hers", "him", "his",
    "how", "i", "if", "in", "into", "is", "it", "its", "many", "may", "more", "most", "much",
    "of", "on", "one", "or", "other", "our", "she", "should", "so", "some", "such", "than",
    "that", "the", "their", "them", "then", "there", "these", "they", "this", "those", "to",
    "under", "until", "up", "was", "we", "were", "what", "when", "where", "which", "while",
    "who", "whom", "whose", "why", "will", "with", "would", "you", "your",
];

pub fn is_stopword(word: &str) -> bool {
    STOPWORDS.binary_search(&word).is_ok()
}

/// Crude suffix stripping so that "played", "plays" and "playing" agree.
pub fn stem(word: &str) -> String {
    let n = word.chars().count();
    if n > 4 && word.ends_with("ies") {
        return format!("{}y", &word[..word.len() - 3]);
    }
    if n > 5 && word.ends_with("ing") {
        return word[..word.len() - 3].to_string();
    }
    if n > 4 && word.ends_with("ed") {
        return word[..word.len() - 2].to_string();
    }
    if n > 3 && word.ends_with('s') && !word.ends_with("ss") {
        return word[..word.len() - 1].to_string();
    }
    word.to_string()
}

const CALENDAR_WORDS: &[&str] = &[
    "april", "august", "december", "february", "january", "july", "june", "march", "november",
    "october", "september",
];

/// Month names and four-digit years; time reaches retrieval through the time
/// channel instead.
pub fn is_calendar_word(word: &str) -> bool {
    CALENDAR_WORDS.binary_search(&word).is_ok()
        || (word.len() == 4 && word.bytes().all(|b| b.is_ascii_digit()))
}

/// Lower-cased, stemmed alphanumeric words without stopwords or calendar words.
pub fn content_words(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .filter(|w| !is_stopword(w) && !is_calendar_word(w))
        .map(|w| stem(&w))
        .collect()
}

/// Fraction of the question's content words present in `passage`, in `[0, 1]`.
pub fn lexical_overlap(question: &str, passage: &str) -> f64 {
    let q = content_words(question);
    if q.is_empty() {
        return 0.0;
    }
    let p = content_words(passage);
    q.iter().filter(|w| p.contains(*w)).count() as f64 / q.len() as f64
}
