//! Access to chat-completion, embedding and rerank models.
//!
//! Two backends exist: [`remote::RemoteClient`] speaks the OpenAI-compatible
//! HTTP protocol with bounded concurrency and retries, and [`mock::MockBackend`]
//! answers every prompt deterministically from keyword and date heuristics so
//! the whole pipeline runs offline.

pub mod mock;
pub mod remote;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mock::MockBackend;
pub use remote::RemoteClient;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error: HTTP {status}: {body}")]
    Protocol { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("invalid gateway configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatOptions {
    pub temperature: f32,
    pub max_tokens: Option<u32>,
}

impl Default for ChatOptions {
    fn default() -> Self {
        ChatOptions {
            temperature: 0.0,
            max_tokens: None,
        }
    }
}

pub trait ChatBackend: Send + Sync {
    fn chat(&self, messages: &[ChatMessage], opts: &ChatOptions) -> Result<String, GatewayError>;
}

pub trait EmbedBackend: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError>;
}

/// Scores `(query, document)` pairs in `[0, 1]`.
pub trait RerankBackend: Send + Sync {
    fn rerank(&self, query: &str, documents: &[String]) -> Result<Vec<f64>, GatewayError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    #[default]
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub backend: BackendKind,
    pub base_url: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub chat_model: String,
    pub embed_model: String,
    /// Cross-encoder served at `/v1/rerank`; the lexical scorer is used when empty.
    pub rerank_model: String,
    pub max_concurrency: usize,
    pub retry_count: u32,
    pub timeout_seconds: u64,
    pub backoff_ms: u64,
    pub embed_batch_size: usize,
    /// Vector width of the mock embedder.
    pub mock_embed_dim: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            backend: BackendKind::Mock,
            base_url: "http://localhost:8000".to_string(),
            api_key_env: "OPENAI_API_KEY".to_string(),
            chat_model: "Qwen2.5-14B-Instruct".to_string(),
            embed_model: "bge-m3".to_string(),
            rerank_model: String::new(),
            max_concurrency: 32,
            retry_count: 3,
            timeout_seconds: 120,
            backoff_ms: 500,
            embed_batch_size: 32,
            mock_embed_dim: 256,
        }
    }
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_concurrency == 0 {
            return Err(GatewayError::Config("max_concurrency must be >= 1".into()));
        }
        if self.embed_batch_size == 0 {
            return Err(GatewayError::Config("embed_batch_size must be >= 1".into()));
        }
        match self.backend {
            BackendKind::Mock if self.mock_embed_dim == 0 => {
                Err(GatewayError::Config("mock_embed_dim must be >= 1".into()))
            }
            BackendKind::Remote if self.base_url.is_empty() => {
                Err(GatewayError::Config("remote backend needs base_url".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
pub struct Semaphore {
    available: Mutex<usize>,
    cond: Condvar,
}

pub struct Permit<'a> {
    sem: &'a Semaphore,
}

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Semaphore {
            available: Mutex::new(permits),
            cond: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().expect("semaphore poisoned");
        while *n == 0 {
            n = self.cond.wait(n).expect("semaphore poisoned");
        }
        *n -= 1;
        Permit { sem: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.sem.available.lock().expect("semaphore poisoned") += 1;
        self.sem.cond.notify_one();
    }
}

#[derive(Debug, Default)]
pub struct GatewayStats {
    chat_calls: AtomicU64,
    embed_calls: AtomicU64,
    rerank_calls: AtomicU64,
}

impl GatewayStats {
    pub fn chat_calls(&self) -> u64 {
        self.chat_calls.load(Ordering::Relaxed)
    }

    pub fn embed_calls(&self) -> u64 {
        self.embed_calls.load(Ordering::Relaxed)
    }

    pub fn rerank_calls(&self) -> u64 {
        self.rerank_calls.load(Ordering::Relaxed)
    }

    pub fn total(&self) -> u64 {
        self.chat_calls() + self.embed_calls() + self.rerank_calls()
    }
}

/// Uniform handle over chat, embedding and optional rerank backends.
#[derive(Clone)]
pub struct ModelGateway {
    chat: Arc<dyn ChatBackend>,
    embed: Arc<dyn EmbedBackend>,
    rerank: Option<Arc<dyn RerankBackend>>,
    stats: Arc<GatewayStats>,
}

impl std::fmt::Debug for ModelGateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelGateway")
            .field("has_rerank", &self.rerank.is_some())
            .field("stats", &self.stats)
            .finish()
    }
}

impl ModelGateway {
    pub fn from_config(cfg: &GatewayConfig) -> Result<Self, GatewayError> {
        cfg.validate()?;
        match cfg.backend {
            BackendKind::Mock => Ok(Self::mock(cfg.mock_embed_dim)),
            BackendKind::Remote => {
                let client = Arc::new(RemoteClient::new(cfg.clone())?);
                let rerank: Option<Arc<dyn RerankBackend>> = if cfg.rerank_model.is_empty() {
                    None
                } else {
                    Some(client.clone())
                };
                Ok(Self::from_parts(client.clone(), client, rerank))
            }
        }
    }

    pub fn mock(embed_dim: usize) -> Self {
        let backend = Arc::new(MockBackend::new(embed_dim));
        Self::from_parts(backend.clone(), backend, None)
    }

    pub fn from_parts(
        chat: Arc<dyn ChatBackend>,
        embed: Arc<dyn EmbedBackend>,
        rerank: Option<Arc<dyn RerankBackend>>,
    ) -> Self {
        ModelGateway {
            chat,
            embed,
            rerank,
            stats: Arc::new(GatewayStats::default()),
        }
    }

    pub fn chat(&self, messages: &[ChatMessage], opts: &ChatOptions) -> Result<String, GatewayError> {
        self.stats.chat_calls.fetch_add(1, Ordering::Relaxed);
        self.chat.chat(messages, opts)
    }

    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::Config("embed called with an empty batch".into()));
        }
        self.stats.embed_calls.fetch_add(1, Ordering::Relaxed);
        let vectors = self.embed.embed(texts)?;
        if vectors.len() != texts.len() {
            return Err(GatewayError::Malformed(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                vectors.len()
            )));
        }
        Ok(vectors)
    }

    pub fn has_reranker(&self) -> bool {
        self.rerank.is_some()
    }

    pub fn rerank(&self, query: &str, documents: &[String]) -> Option<Result<Vec<f64>, GatewayError>> {
        let backend = self.rerank.as_ref()?;
        self.stats.rerank_calls.fetch_add(1, Ordering::Relaxed);
        Some(backend.rerank(query, documents))
    }

    pub fn stats(&self) -> &GatewayStats {
        &self.stats
    }
}

/// Extracts the payload between `<<<INPUT` and `INPUT>>>` markers.
pub fn prompt_payload(prompt: &str) -> Option<&str> {
    let start = prompt.find("<<<INPUT")? + "<<<INPUT".len();
    let end = prompt[start..].find("INPUT>>>")? + start;
    Some(prompt[start..end].trim_matches('\n'))
}

/// Reads the `TASK: name` line of a prompt.
pub fn prompt_task(prompt: &str) -> Option<&str> {
    prompt
        .lines()
        .find_map(|l| l.trim().strip_prefix("TASK:"))
        .map(str::trim)
}

/// Slices the outermost JSON array or object out of model text that may be
/// wrapped in prose or code fences.
pub fn json_slice(text: &str, open: char, close: char) -> Option<&str> {
    let start = text.find(open)?;
    let end = text.rfind(close)?;
    (end > start).then(|| &text[start..=end])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_and_task() {
        let p = "TASK: extract_events\nblah\n<<<INPUT\nhello\nworld\nINPUT>>>\n";
        assert_eq!(prompt_task(p), Some("extract_events"));
        assert_eq!(prompt_payload(p), Some("hello\nworld"));
        assert_eq!(prompt_payload("none"), None);
    }

    #[test]
    fn json_slice_strips_fences() {
        assert_eq!(json_slice("```json\n[1,2]\n```", '[', ']'), Some("[1,2]"));
        assert_eq!(json_slice("no json", '[', ']'), None);
    }

    #[test]
    fn config_validation() {
        let mut cfg = GatewayConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.max_concurrency = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn empty_embed_batch_rejected() {
        let gw = ModelGateway::mock(8);
        assert!(gw.embed(&[]).is_err());
    }
}
