//! Fourier time encoding and time-enhanced embeddings.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::TimeAnchor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodingError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("text vector has zero norm")]
    ZeroVector,
    #[error("lambda {0} outside [0, 1]")]
    LambdaOutOfRange(f64),
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
}

/// Hyperparameters shared by the encoder, the event graph and the walker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub d_tau: usize,
    pub min_period_days: f64,
    pub max_period_days: f64,
    pub lambda_default: f64,
    pub alpha_per_year: f64,
    pub delta_t_days: u64,
    pub top_k_neighbors: usize,
    pub walk_length: usize,
    /// Decay factor for edges with a static endpoint.
    pub static_decay: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            d_tau: 16,
            min_period_days: 30.0,
            max_period_days: 36_500.0,
            lambda_default: 0.3,
            alpha_per_year: 0.5,
            delta_t_days: 1825,
            top_k_neighbors: 10,
            walk_length: 4,
            static_decay: 0.5,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncodingError> {
        let bad = |m: String| Err(EncodingError::InvalidConfig(m));
        if self.d_tau < 2 || !self.d_tau.is_multiple_of(2) {
            return bad(format!("d_tau must be even and >= 2, got {}", self.d_tau));
        }
        if !(self.min_period_days > 0.0 && self.min_period_days < self.max_period_days && self.max_period_days.is_finite()) {
            return bad(format!(
                "periods must satisfy 0 < min < max, got {} and {}",
                self.min_period_days, self.max_period_days
            ));
        }
        if !(0.0..=1.0).contains(&self.lambda_default) {
            return bad(format!("lambda_default {} outside [0, 1]", self.lambda_default));
        }
        if !(self.alpha_per_year > 0.0 && self.alpha_per_year.is_finite()) {
            return bad(format!("alpha_per_year must be positive, got {}", self.alpha_per_year));
        }
        if self.delta_t_days == 0 || self.top_k_neighbors == 0 || self.walk_length == 0 {
            return bad("delta_t_days, top_k_neighbors and walk_length must be positive".into());
        }
        if !(self.static_decay > 0.0 && self.static_decay <= 1.0) {
            return bad(format!("static_decay {} outside (0, 1]", self.static_decay));
        }
        Ok(())
    }

    /// Angular frequencies, one per (sin, cos) pair, for periods log-spaced
    /// from `min_period_days` to `max_period_days`.
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.d_tau / 2;
        let ratio = self.max_period_days / self.min_period_days;
        (0..n)
            .map(|k| {
                let frac = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };
                let period = self.min_period_days * ratio.powf(frac);
                std::f64::consts::TAU / period
            })
            .collect()
    }

    /// Hex SHA-256 over the fields that shape stored vectors and edges.
    /// Query-time knobs (`lambda_default`, `walk_length`) are excluded.
    pub fn config_hash(&self) -> String {
        let canon = serde_json::json!({
            "d_tau": self.d_tau,
            "min_period_days": self.min_period_days,
            "max_period_days": self.max_period_days,
            "alpha_per_year": self.alpha_per_year,
            "delta_t_days": self.delta_t_days,
            "top_k_neighbors": self.top_k_neighbors,
            "static_decay": self.static_decay,
        })
        .to_string();
        Sha256::digest(canon.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalized(v: &[f64]) -> Result<Vec<f64>, EncodingError> {
    let n = l2_norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(EncodingError::ZeroVector);
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Interleaved `(sin(day * w_k), cos(day * w_k))`, L2-normalized.
pub fn fourier_encode(day: i64, cfg: &EncoderConfig) -> Vec<f64> {
    let t = day as f64;
    let mut out = Vec::with_capacity(cfg.d_tau);
    for w in cfg.frequencies() {
        let (s, c) = (t * w).sin_cos();
        out.push(s);
        out.push(c);
    }
    // each pair has unit norm, so the whole vector has norm sqrt(d_tau / 2)
    let scale = 1.0 / ((cfg.d_tau / 2) as f64).sqrt();
    out.iter_mut().for_each(|x| *x *= scale);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeEnhancedEmbedding {
    pub text_part: Vec<f64>,
    pub time_part: Vec<f64>,
    pub is_static: bool,
}

impl TimeEnhancedEmbedding {
    pub fn concat(&self) -> Vec<f64> {
        let mut v = self.text_part.clone();
        v.extend_from_slice(&self.time_part);
        v
    }
}

pub fn embed_deu(
    text_vector: &[f64],
    anchor: &TimeAnchor,
    cfg: &EncoderConfig,
) -> Result<TimeEnhancedEmbedding, EncodingError> {
    let text_part = normalized(text_vector)?;
    Ok(match anchor.index_day() {
        Some(day) => TimeEnhancedEmbedding {
            text_part,
            time_part: fourier_encode(day, cfg),
            is_static: false,
        },
        None => TimeEnhancedEmbedding {
            text_part,
            time_part: vec![0.0; cfg.d_tau],
            is_static: true,
        },
    })
}

/// `[text ; lambda * time]`. The time part is zero when the query has no
/// temporal constraint (or a static one).
pub fn embed_query(
    text_vector: &[f64],
    t_q: Option<&TimeAnchor>,
    lambda: f64,
    cfg: &EncoderConfig,
) -> Result<Vec<f64>, EncodingError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(EncodingError::LambdaOutOfRange(lambda));
    }
    let mut out = normalized(text_vector)?;
    match t_q.and_then(TimeAnchor::index_day) {
        Some(day) => out.extend(fourier_encode(day, cfg).into_iter().map(|x| lambda * x)),
        None => out.extend(std::iter::repeat_n(0.0, cfg.d_tau)),
    }
    Ok(out)
}
