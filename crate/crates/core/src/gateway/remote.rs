//! OpenAI-compatible HTTP client: `/v1/chat/completions`, `/v1/embeddings`
//! and `/v1/rerank`.

use std::time::Duration;

use log::warn;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{
    ChatBackend, ChatMessage, ChatOptions, EmbedBackend, GatewayConfig, GatewayError,
    RerankBackend, Semaphore,
};

pub struct RemoteClient {
    http: reqwest::blocking::Client,
    cfg: GatewayConfig,
    api_key: Option<String>,
    inflight: Semaphore,
}

enum Attempt {
    Done(Value),
    Retry(String),
    Fatal(GatewayError),
}

impl RemoteClient {
    pub fn new(cfg: GatewayConfig) -> Result<Self, GatewayError> {
        cfg.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_seconds.max(1)))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        let api_key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
        Ok(RemoteClient {
            http,
            inflight: Semaphore::new(cfg.max_concurrency),
            api_key,
            cfg,
        })
    }

    fn url(&self, path: &str) -> String {
        let base = self.cfg.base_url.trim_end_matches('/');
        if base.ends_with("/v1") {
            format!("{base}{path}")
        } else {
            format!("{base}/v1{path}")
        }
    }

    fn attempt(&self, url: &str, body: &Value) -> Attempt {
        let _permit = self.inflight.acquire();
        let mut req = self.http.post(url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status();
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        if status.is_success() {
            return match serde_json::from_str(&text) {
                Ok(v) => Attempt::Done(v),
                Err(e) => Attempt::Fatal(GatewayError::Malformed(e.to_string())),
            };
        }
        let excerpt: String = text.chars().take(512).collect();
        if status.as_u16() == 429 || status.is_server_error() {
            Attempt::Retry(format!("HTTP {}: {excerpt}", status.as_u16()))
        } else {
            Attempt::Fatal(GatewayError::Protocol {
                status: status.as_u16(),
                body: excerpt,
            })
        }
    }

    /// POSTs `body`, retrying transient failures with exponential backoff.
    pub fn post_json(&self, path: &str, body: &Value) -> Result<Value, GatewayError> {
        let url = self.url(path);
        let mut last = String::new();
        for attempt in 0..=self.cfg.retry_count {
            if attempt > 0 {
                let delay = self.cfg.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.attempt(&url, body) {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(msg) => {
                    warn!("{path} attempt {} failed: {msg}", attempt + 1);
                    last = msg;
                }
            }
        }
        Err(GatewayError::Transport(format!(
            "{path}: retries exhausted after {} attempts: {last}",
            self.cfg.retry_count + 1
        )))
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f64>,
}

#[derive(Deserialize)]
struct RerankResponse {
    results: Vec<RerankDatum>,
}

#[derive(Deserialize)]
struct RerankDatum {
    index: usize,
    relevance_score: f64,
}

fn decode<T: serde::de::DeserializeOwned>(v: Value) -> Result<T, GatewayError> {
    serde_json::from_value(v).map_err(|e| GatewayError::Malformed(e.to_string()))
}

impl ChatBackend for RemoteClient {
    fn chat(&self, messages: &[ChatMessage], opts: &ChatOptions) -> Result<String, GatewayError> {
        let mut body = json!({
            "model": self.cfg.chat_model,
            "messages": messages,
            "temperature": opts.temperature,
        });
        if let Some(max) = opts.max_tokens {
            body["max_tokens"] = json!(max);
        }
        let resp: ChatResponse = decode(self.post_json("/chat/completions", &body)?)?;
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| GatewayError::Malformed("completion without content".into()))
    }
}

impl EmbedBackend for RemoteClient {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.cfg.embed_batch_size) {
            let body = json!({ "model": self.cfg.embed_model, "input": batch });
            let mut resp: EmbeddingResponse = decode(self.post_json("/embeddings", &body)?)?;
            if resp.data.len() != batch.len() {
                return Err(GatewayError::Malformed(format!(
                    "embedding batch of {} returned {} vectors",
                    batch.len(),
                    resp.data.len()
                )));
            }
            resp.data.sort_by_key(|d| d.index);
            out.extend(resp.data.into_iter().map(|d| d.embedding));
        }
        Ok(out)
    }
}

impl RerankBackend for RemoteClient {
    fn rerank(&self, query: &str, documents: &[String]) -> Result<Vec<f64>, GatewayError> {
        let body = json!({
            "model": self.cfg.rerank_model,
            "query": query,
            "documents": documents,
        });
        let resp: RerankResponse = decode(self.post_json("/rerank", &body)?)?;
        let mut scores = vec![0.0; documents.len()];
        for r in resp.results {
            let slot = scores
                .get_mut(r.index)
                .ok_or_else(|| GatewayError::Malformed(format!("rerank index {} out of range", r.index)))?;
            *slot = r.relevance_score.clamp(0.0, 1.0);
        }
        Ok(scores)
    }
}
