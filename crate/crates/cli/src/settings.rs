//! The TOML run configuration shared by every subcommand.

use std::path::Path;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use mvground_core::backend::{DecodeParams, GroundingBackend, HttpBackend, MockBackend, MockModelSpec, RetryPolicy};
use mvground_core::harness::PerturbationSettings;
use mvground_core::MvpConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpSettings {
    pub timeout_secs: f64,
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for HttpSettings {
    fn default() -> Self {
        let retry = RetryPolicy::default();
        Self {
            timeout_secs: 120.0,
            max_attempts: retry.max_attempts,
            base_delay_ms: retry.base_delay.as_millis() as u64,
            max_delay_ms: retry.max_delay.as_millis() as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    /// Samples evaluated in parallel.
    pub workers: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self { workers: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbSection {
    pub border_px: u32,
    pub height_edges: Vec<u32>,
    pub area_edges: Vec<u64>,
}

impl Default for PerturbSection {
    fn default() -> Self {
        let d = PerturbationSettings::default();
        Self { border_px: d.border_px, height_edges: d.height_edges, area_edges: d.area_edges }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub mvp: MvpConfig,
    pub mock: MockModelSpec,
    pub http: HttpSettings,
    pub run: RunSettings,
    pub decode: DecodeParams,
    pub perturb: PerturbSection,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let s: Settings = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        s.mvp.validate().with_context(|| format!("{}: [mvp]", path.display()))?;
        if let Err(e) = s.mock.validate() {
            bail!("{}: [mock]: {e}", path.display());
        }
        if s.run.workers == 0 {
            bail!("{}: [run] workers must be at least 1", path.display());
        }
        Ok(s)
    }
}

pub enum BackendChoice {
    Mock(MockBackend),
    Http(HttpBackend),
}

impl BackendChoice {
    /// `mock` selects the seeded simulator; anything else is a base URL.
    pub fn build(spec: &str, settings: &Settings, seed: Option<u64>) -> Result<Self> {
        if spec.eq_ignore_ascii_case("mock") {
            let mut mock = settings.mock.clone();
            if let Some(seed) = seed {
                mock.seed = seed;
            }
            return Ok(BackendChoice::Mock(MockBackend::new(mock)));
        }
        if !(spec.starts_with("http://") || spec.starts_with("https://")) {
            bail!("--backend must be `mock` or an http(s) URL, got {spec:?}");
        }
        let h = &settings.http;
        if !(h.timeout_secs.is_finite() && h.timeout_secs > 0.0) {
            bail!("[http] timeout_secs must be positive");
        }
        let retry = RetryPolicy {
            max_attempts: h.max_attempts.max(1),
            base_delay: Duration::from_millis(h.base_delay_ms),
            max_delay: Duration::from_millis(h.max_delay_ms),
        };
        let backend = HttpBackend::new(spec, Duration::from_secs_f64(h.timeout_secs), retry)?;
        Ok(BackendChoice::Http(backend))
    }

    pub fn as_dyn(&self) -> &dyn GroundingBackend {
        match self {
            BackendChoice::Mock(b) => b,
            BackendChoice::Http(b) => b,
        }
    }

    /// Description embedded in reports.
    pub fn describe(&self) -> serde_json::Value {
        match self {
            BackendChoice::Mock(b) => serde_json::json!({"kind": "mock", "spec": b.spec}),
            BackendChoice::Http(b) => serde_json::json!({"kind": "http", "url": b.base_url()}),
        }
    }
}
