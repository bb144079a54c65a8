//! Blocking HTTP client for the backend protocol.

use std::time::Duration;

use rand::Rng;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::codec::{encode_png_b64, materialize};
use super::wire::{
    AttentionRequest, AttentionResponse, ErrorBody, GroundRequest, GroundResponse, ATTENTION_PATH,
    GROUND_PATH,
};
use super::{AttentionCall, BackendError, GroundingBackend, GroundingCall};
use crate::attention::RawAttentionRows;

/// Exponential backoff with full jitter: attempt `n` (0-based) waits a
/// uniform delay in `[0, min(max_delay, base_delay * 2^n)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(250),
            max_delay: Duration::from_secs(4),
        }
    }
}

impl RetryPolicy {
    pub fn backoff_cap(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }

    fn sleep(&self, attempt: u32) {
        let cap = self.backoff_cap(attempt).as_secs_f64();
        if cap > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(rand::rng().random_range(0.0..=cap)));
        }
    }
}

fn retryable_status(status: StatusCode) -> bool {
    matches!(
        status,
        StatusCode::TOO_MANY_REQUESTS
            | StatusCode::BAD_GATEWAY
            | StatusCode::SERVICE_UNAVAILABLE
            | StatusCode::GATEWAY_TIMEOUT
    )
}

fn error_message(status: StatusCode, body: &str) -> String {
    serde_json::from_str::<ErrorBody>(body)
        .map(|e| e.error)
        .unwrap_or_else(|_| if body.is_empty() { status.to_string() } else { body.to_string() })
}

/// Client for a remote grounding service. Safe to share across threads;
/// `reqwest`'s blocking client pools connections internally.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    base_url: String,
    client: Client,
    retry: RetryPolicy,
}

impl HttpBackend {
    pub fn new(base_url: &str, timeout: Duration, retry: RetryPolicy) -> Result<Self, BackendError> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Transport { attempts: 0, message: e.to_string() })?;
        Ok(Self { base_url: base_url.trim_end_matches('/').to_string(), client, retry })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, body: &Req) -> Result<Resp, BackendError> {
        let url = format!("{}{}", self.base_url, path);
        let attempts = self.retry.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                self.retry.sleep(attempt - 1);
            }
            let resp = match self.client.post(&url).json(body).send() {
                Ok(r) => r,
                Err(e) => {
                    log::debug!("POST {url} attempt {} failed: {e}", attempt + 1);
                    last = e.to_string();
                    continue;
                }
            };
            let status = resp.status();
            let text = match resp.text() {
                Ok(t) => t,
                Err(e) => {
                    last = e.to_string();
                    continue;
                }
            };
            if status.is_success() {
                return serde_json::from_str(&text).map_err(|e| BackendError::Protocol(e.to_string()));
            }
            let message = error_message(status, &text);
            if retryable_status(status) && attempt + 1 < attempts {
                log::debug!("POST {url} returned {status}, retrying");
                last = message;
                continue;
            }
            return Err(BackendError::Rejected { status: status.as_u16(), message });
        }
        Err(BackendError::Transport { attempts, message: last })
    }
}

impl GroundingBackend for HttpBackend {
    fn generate(&self, call: &GroundingCall<'_>) -> Result<String, BackendError> {
        let pixels = call.screenshot.pixels().ok_or(BackendError::MissingPixels)?;
        let raster = if call.view.is_original() { pixels.clone() } else { materialize(pixels, call.view) };
        let req = GroundRequest {
            image_b64: encode_png_b64(&raster)?,
            instruction: call.instruction.to_string(),
            params: call.params.clone(),
        };
        let resp: GroundResponse = self.post(GROUND_PATH, &req)?;
        Ok(resp.raw_text)
    }

    fn attention(&self, call: &AttentionCall<'_>) -> Result<RawAttentionRows, BackendError> {
        let pixels = call.screenshot.pixels().ok_or(BackendError::MissingPixels)?;
        let req = AttentionRequest {
            image_b64: encode_png_b64(pixels)?,
            instruction: call.instruction.to_string(),
            layer: call.layer,
            query_mode: call.query_mode,
        };
        let resp: AttentionResponse = match self.post(ATTENTION_PATH, &req) {
            Ok(r) => r,
            Err(BackendError::Rejected { status: 404 | 405 | 501, message }) => {
                return Err(BackendError::AttentionUnavailable(message))
            }
            Err(e) => return Err(e),
        };
        if let Some(mode) = resp.fallback_mode {
            log::warn!("bridge fell back to {} attention", mode.as_str());
        }
        resp.into_rows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_grows_and_caps() {
        let p = RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(350),
        };
        assert_eq!(p.backoff_cap(0), Duration::from_millis(100));
        assert_eq!(p.backoff_cap(1), Duration::from_millis(200));
        assert_eq!(p.backoff_cap(2), Duration::from_millis(350));
        assert_eq!(p.backoff_cap(40), Duration::from_millis(350));
    }

    #[test]
    fn error_bodies() {
        assert_eq!(error_message(StatusCode::BAD_REQUEST, r#"{"error":"bad layer"}"#), "bad layer");
        assert_eq!(error_message(StatusCode::BAD_REQUEST, "plain"), "plain");
        assert_eq!(error_message(StatusCode::BAD_REQUEST, ""), "400 Bad Request");
    }
}
