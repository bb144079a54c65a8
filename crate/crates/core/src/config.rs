use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("k ({k}) must be at least m ({m})")]
    TooFewTokens { k: usize, m: usize },
    #[error("tau must be positive and finite, got {0}")]
    BadTau(f64),
    #[error("alpha must be >= 1, got {0}")]
    BadAlpha(f64),
    #[error("view size must be non-zero")]
    EmptyView,
    #[error("max_in_flight must be at least 1")]
    NoConcurrency,
}

/// Which token's attention row seeds the view proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    #[default]
    Comma,
    Instruction,
    ImStart,
    ImEnd,
}

impl QueryMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            QueryMode::Comma => "comma",
            QueryMode::Instruction => "instruction",
            QueryMode::ImStart => "im_start",
            QueryMode::ImEnd => "im_end",
        }
    }
}

/// How to build views for screenshots below `lowres_threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowResStrategy {
    #[default]
    BorderPad,
    Attention,
}

/// Tunables for one multi-view run. Defaults match the reference setup:
/// 1280x720 views upscaled 2x, top-100 tokens, 4 views, tau = 14 px.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MvpConfig {
    pub view_w: u32,
    pub view_h: u32,
    pub k: usize,
    /// Number of extra views; 0 means plain single-image inference.
    pub m: usize,
    pub alpha: f64,
    pub tau: f64,
    pub attn_layer: u32,
    pub query_mode: QueryMode,
    /// Screenshots whose shorter side is below this use `lowres_strategy`.
    pub lowres_threshold: u32,
    pub lowres_strategy: LowResStrategy,
    pub border_px: u32,
    pub max_in_flight: usize,
}

impl Default for MvpConfig {
    fn default() -> Self {
        Self {
            view_w: 1280,
            view_h: 720,
            k: 100,
            m: 4,
            alpha: 2.0,
            tau: 14.0,
            attn_layer: 20,
            query_mode: QueryMode::Comma,
            lowres_threshold: 720,
            lowres_strategy: LowResStrategy::BorderPad,
            border_px: 28,
            max_in_flight: 8,
        }
    }
}

impl MvpConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k < self.m {
            return Err(ConfigError::TooFewTokens { k: self.k, m: self.m });
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(ConfigError::BadTau(self.tau));
        }
        if !(self.alpha.is_finite() && self.alpha >= 1.0) {
            return Err(ConfigError::BadAlpha(self.alpha));
        }
        if self.view_w == 0 || self.view_h == 0 {
            return Err(ConfigError::EmptyView);
        }
        if self.max_in_flight == 0 {
            return Err(ConfigError::NoConcurrency);
        }
        Ok(())
    }
}
