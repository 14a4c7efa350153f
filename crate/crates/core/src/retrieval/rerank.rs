use log::warn;

use crate::gateway::ModelGateway;
use crate::text::lexical_overlap;

/// Scores `(question, sentence)` relevance in `[0, 1]`.
pub trait Reranker: Send + Sync {
    fn score(&self, question: &str, sentences: &[String]) -> Vec<f64>;
}

/// Fraction of the question's content words found in the sentence.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalReranker;

impl Reranker for LexicalReranker {
    fn score(&self, question: &str, sentences: &[String]) -> Vec<f64> {
        sentences.iter().map(|s| lexical_overlap(question, s)).collect()
    }
}

/// Cross-encoder behind the gateway; falls back to lexical scoring when no
/// reranker is configured or the call fails.
pub struct GatewayReranker<'a> {
    gateway: &'a ModelGateway,
}

impl<'a> GatewayReranker<'a> {
    pub fn new(gateway: &'a ModelGateway) -> Self {
        GatewayReranker { gateway }
    }
}

impl Reranker for GatewayReranker<'_> {
    fn score(&self, question: &str, sentences: &[String]) -> Vec<f64> {
        if sentences.is_empty() {
            return Vec::new();
        }
        match self.gateway.rerank(question, sentences) {
            Some(Ok(scores)) if scores.len() == sentences.len() => {
                scores.into_iter().map(|s| s.clamp(0.0, 1.0)).collect()
            }
            Some(Ok(scores)) => {
                warn!("reranker returned {} scores for {} sentences", scores.len(), sentences.len());
                LexicalReranker.score(question, sentences)
            }
            Some(Err(e)) => {
                warn!("reranker failed, using lexical scores: {e}");
                LexicalReranker.score(question, sentences)
            }
            None => LexicalReranker.score(question, sentences),
        }
    }
}
