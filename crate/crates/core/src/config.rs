//! Run configuration: TOML file, `DYGRAG_*` environment overrides, bounds checks.
//!
//! Top-level fields are overridden by `DYGRAG_<FIELD>` and gateway fields by
//! `DYGRAG_GATEWAY_<FIELD>`, e.g. `DYGRAG_LAMBDA=0.5` or
//! `DYGRAG_GATEWAY_BACKEND=remote`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::EncoderConfig;
use crate::gateway::GatewayConfig;
use crate::ingestion::{ChunkConfig, IngestConfig};
use crate::retrieval::SeedParams;

pub const ENV_PREFIX: &str = "DYGRAG_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GraphBuild {
    /// Node-by-node insertion with eviction.
    #[default]
    Incremental,
    /// Order-independent mutual top-K build.
    Batch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub chunk_tokens: usize,
    pub overlap_tokens: usize,
    pub d_tau: usize,
    pub min_period_days: f64,
    pub max_period_days: f64,
    pub lambda: f64,
    pub delta_t_days: u64,
    pub alpha_per_year: f64,
    pub static_decay: f64,
    pub top_k_neighbors: usize,
    pub graph_build: GraphBuild,
    pub k_candidates: usize,
    pub seed_count: usize,
    pub walks_per_seed: usize,
    pub walk_length: usize,
    pub rerank_floor: f64,
    pub context_cap_tokens: usize,
    /// Bounds ingestion workers, evaluation workers and in-flight model requests.
    pub max_concurrency: usize,
    pub rng_seed: u64,
    pub gateway: GatewayConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let enc = EncoderConfig::default();
        let seeds = SeedParams::default();
        RunConfig {
            chunk_tokens: 1200,
            overlap_tokens: 64,
            d_tau: enc.d_tau,
            min_period_days: enc.min_period_days,
            max_period_days: enc.max_period_days,
            lambda: enc.lambda_default,
            delta_t_days: enc.delta_t_days,
            alpha_per_year: enc.alpha_per_year,
            static_decay: enc.static_decay,
            top_k_neighbors: enc.top_k_neighbors,
            graph_build: GraphBuild::Incremental,
            k_candidates: seeds.k_candidates,
            seed_count: seeds.seed_count,
            walks_per_seed: 3,
            walk_length: enc.walk_length,
            rerank_floor: seeds.rerank_floor,
            context_cap_tokens: 16_384,
            max_concurrency: 32,
            rng_seed: 42,
            gateway: GatewayConfig::default(),
        }
    }
}

/// Parses an override as a TOML scalar, falling back to a plain string.
fn env_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl RunConfig {
    /// Parses TOML text, applies overrides and validates.
    pub fn from_sources<I>(toml_text: &str, env: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table: toml::Table = toml::from_str(toml_text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut overrides: Vec<(String, String)> = env
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX))
            .collect();
        overrides.sort();
        for (key, raw) in overrides {
            let name = key[ENV_PREFIX.len()..].to_ascii_lowercase();
            let (target, field) = match name.strip_prefix("gateway_") {
                Some(f) => {
                    let gw = table
                        .entry("gateway")
                        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
                    let t = gw
                        .as_table_mut()
                        .ok_or_else(|| ConfigError::Parse("gateway must be a table".into()))?;
                    (t, f.to_string())
                }
                None => (&mut table, name),
            };
            target.insert(field, env_value(&raw));
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path` (or defaults when `None`) with overrides from the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.display().to_string(),
                source,
            })?,
            None => String::new(),
        };
        Self::from_sources(&text, std::env::vars())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.overlap_tokens == 0 || self.chunk_tokens <= self.overlap_tokens {
            return bad(format!(
                "need chunk_tokens > overlap_tokens >= 1, got {} and {}",
                self.chunk_tokens, self.overlap_tokens
            ));
        }
        self.encoder().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.k_candidates == 0 || self.seed_count == 0 || self.seed_count > self.k_candidates {
            return bad(format!(
                "need 1 <= seed_count <= k_candidates, got {} and {}",
                self.seed_count, self.k_candidates
            ));
        }
        if self.walks_per_seed == 0 {
            return bad("walks_per_seed must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.rerank_floor) {
            return bad(format!("rerank_floor {} outside [0, 1)", self.rerank_floor));
        }
        if self.context_cap_tokens < 256 {
            return bad(format!("context_cap_tokens {} is below 256", self.context_cap_tokens));
        }
        if !(1..=1024).contains(&self.max_concurrency) {
            return bad(format!("max_concurrency {} outside 1..=1024", self.max_concurrency));
        }
        self.gateway.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            d_tau: self.d_tau,
            min_period_days: self.min_period_days,
            max_period_days: self.max_period_days,
            lambda_default: self.lambda,
            alpha_per_year: self.alpha_per_year,
            delta_t_days: self.delta_t_days,
            top_k_neighbors: self.top_k_neighbors,
            walk_length: self.walk_length,
            static_decay: self.static_decay,
        }
    }

    pub fn ingest(&self) -> IngestConfig {
        IngestConfig {
            chunk: ChunkConfig {
                chunk_tokens: self.chunk_tokens,
                overlap_tokens: self.overlap_tokens,
            },
            max_concurrency: self.max_concurrency,
        }
    }

    pub fn seed_params(&self) -> SeedParams {
        SeedParams {
            k_candidates: self.k_candidates,
            seed_count: self.seed_count,
            rerank_floor: self.rerank_floor,
        }
    }

    /// Gateway settings with the run-wide concurrency bound applied.
    pub fn gateway_config(&self) -> GatewayConfig {
        GatewayConfig {
            max_concurrency: self.max_concurrency,
            ..self.gateway.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::BackendKind;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults() {
        let c = RunConfig::from_sources("", env(&[])).unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!((c.chunk_tokens, c.overlap_tokens, c.k_candidates, c.context_cap_tokens, c.max_concurrency), (1200, 64, 20, 16_384, 32));
        assert_eq!((c.d_tau, c.lambda, c.delta_t_days, c.alpha_per_year, c.top_k_neighbors), (16, 0.3, 1825, 0.5, 10));
        assert_eq!((c.seed_count, c.walks_per_seed, c.walk_length), (5, 3, 4));
    }

    #[test]
    fn file_then_env_overrides() {
        let text = "lambda = 0.5\nrng_seed = 7\n[gateway]\nchat_model = \"m\"\n";
        let c = RunConfig::from_sources(
            text,
            env(&[
                ("DYGRAG_LAMBDA", "0.8"),
                ("DYGRAG_GATEWAY_BACKEND", "remote"),
                ("DYGRAG_GATEWAY_BASE_URL", "http://127.0.0.1:9"),
                ("DYGRAG_GRAPH_BUILD", "batch"),
                ("OTHER", "x"),
            ]),
        )
        .unwrap();
        assert_eq!(c.lambda, 0.8);
        assert_eq!(c.rng_seed, 7);
        assert_eq!(c.gateway.chat_model, "m");
        assert_eq!(c.gateway.backend, BackendKind::Remote);
        assert_eq!(c.gateway.base_url, "http://127.0.0.1:9");
        assert_eq!(c.graph_build, GraphBuild::Batch);
    }

    #[test]
    fn bounds_are_checked() {
        for bad in [
            "lambda = 1.5",
            "overlap_tokens = 1200",
            "d_tau = 7",
            "seed_count = 30",
            "max_concurrency = 0",
            "context_cap_tokens = 10",
            "rerank_floor = 1.0",
            "unknown_knob = 3",
        ] {
            assert!(RunConfig::from_sources(bad, env(&[])).is_err(), "{bad}");
        }
        assert!(RunConfig::from_sources("", env(&[("DYGRAG_LAMBDA", "high")])).is_err());
    }
}
