//! Grounding backends: the trait the pipeline drives, the HTTP client for
//! the wire protocol, the coordinate-text parser, raster materialization,
//! and a seeded mock model.

pub mod codec;
pub mod http;
pub mod mock;
pub mod parse;
pub mod wire;

use std::path::Path;
use std::sync::Arc;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::attention::RawAttentionRows;
use crate::config::QueryMode;
use crate::geometry::{ImageDims, Point, Rect};
use crate::views::View;

pub use http::{HttpBackend, RetryPolicy};
pub use mock::{KeyMode, MockAttentionSpec, MockBackend, MockModelSpec, WrongMode};
pub use parse::{parse_coordinates, ParseError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend rejected request with status {status}: {message}")]
    Rejected { status: u16, message: String },
    #[error("no coordinate found in backend output {0:?}")]
    NoCoordinateFound(String),
    #[error("attention endpoint unavailable: {0}")]
    AttentionUnavailable(String),
    #[error("malformed backend response: {0}")]
    Protocol(String),
    #[error("image codec: {0}")]
    Codec(String),
    #[error("screenshot has no pixel data; only the mock backend can run on it")]
    MissingPixels,
}

/// Decoding parameters forwarded verbatim to the backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DecodeParams(pub serde_json::Map<String, serde_json::Value>);

impl Default for DecodeParams {
    /// Greedy decoding.
    fn default() -> Self {
        let mut map = serde_json::Map::new();
        map.insert("temperature".into(), serde_json::Value::from(0.0));
        DecodeParams(map)
    }
}

type Digest32 = [u8; 32];

/// A screenshot plus a content digest. Synthetic screenshots carry only
/// dimensions; their digest comes from a caller-supplied key.
#[derive(Debug, Clone)]
pub struct Screenshot {
    dims: ImageDims,
    pixels: Option<Arc<RgbImage>>,
    digest: Digest32,
}

impl Screenshot {
    pub fn from_rgb(img: RgbImage) -> Self {
        let dims = ImageDims { width: img.width(), height: img.height() };
        let mut h = Sha256::new();
        h.update(dims.width.to_le_bytes());
        h.update(dims.height.to_le_bytes());
        h.update(img.as_raw());
        Self { dims, pixels: Some(Arc::new(img)), digest: h.finalize().into() }
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let img = image::open(path.as_ref())
            .map_err(|e| BackendError::Codec(format!("{}: {e}", path.as_ref().display())))?;
        Ok(Self::from_rgb(img.to_rgb8()))
    }

    pub fn synthetic(dims: ImageDims, key: &str) -> Self {
        let mut h = Sha256::new();
        h.update(b"synthetic\0");
        h.update(dims.width.to_le_bytes());
        h.update(dims.height.to_le_bytes());
        h.update(key.as_bytes());
        Self { dims, pixels: None, digest: h.finalize().into() }
    }

    pub fn dims(&self) -> ImageDims {
        self.dims
    }

    pub fn pixels(&self) -> Option<&RgbImage> {
        self.pixels.as_deref()
    }

    pub fn digest(&self) -> &Digest32 {
        &self.digest
    }

    /// Digest of the raster the backend would receive for `view`. Equal
    /// inputs give equal digests; any change to crop, scale or padding
    /// changes it.
    pub fn view_digest(&self, view: &View) -> Digest32 {
        let mut h = Sha256::new();
        h.update(self.digest);
        for v in [view.rect.x, view.rect.y, view.rect.w, view.rect.h] {
            h.update(v.to_le_bytes());
        }
        h.update(view.alpha.to_bits().to_le_bytes());
        for v in [view.pad.left, view.pad.top, view.pad.right, view.pad.bottom] {
            h.update(v.to_le_bytes());
        }
        h.finalize().into()
    }
}

/// One grounding inference over one view of a screenshot.
#[derive(Debug, Clone, Copy)]
pub struct GroundingCall<'a> {
    pub screenshot: &'a Screenshot,
    pub instruction: &'a str,
    pub view: &'a View,
    /// Ground-truth box in the full-image frame. Only simulated backends read it.
    pub target: Option<Rect>,
    pub call_idx: u32,
    pub params: &'a DecodeParams,
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionCall<'a> {
    pub screenshot: &'a Screenshot,
    pub instruction: &'a str,
    pub layer: u32,
    pub query_mode: QueryMode,
    pub target: Option<Rect>,
}

pub trait GroundingBackend: Send + Sync {
    /// Raw model text for one view.
    fn generate(&self, call: &GroundingCall<'_>) -> Result<String, BackendError>;

    /// Per-head attention rows of the query token over the visual tokens of
    /// the full screenshot.
    fn attention(&self, call: &AttentionCall<'_>) -> Result<RawAttentionRows, BackendError>;
}

impl<B: GroundingBackend + ?Sized> GroundingBackend for &B {
    fn generate(&self, call: &GroundingCall<'_>) -> Result<String, BackendError> {
        (**self).generate(call)
    }

    fn attention(&self, call: &AttentionCall<'_>) -> Result<RawAttentionRows, BackendError> {
        (**self).attention(call)
    }
}

impl<B: GroundingBackend + ?Sized> GroundingBackend for Box<B> {
    fn generate(&self, call: &GroundingCall<'_>) -> Result<String, BackendError> {
        (**self).generate(call)
    }

    fn attention(&self, call: &AttentionCall<'_>) -> Result<RawAttentionRows, BackendError> {
        (**self).attention(call)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundingOutput {
    pub raw_text: String,
    /// In the frame of `call.view`.
    pub parsed: Point,
}

/// Runs one inference and parses its coordinate.
pub fn ground<B: GroundingBackend + ?Sized>(
    backend: &B,
    call: &GroundingCall<'_>,
) -> Result<GroundingOutput, BackendError> {
    let raw_text = backend.generate(call)?;
    match parse_coordinates(&raw_text) {
        Ok((x, y)) => Ok(GroundingOutput { parsed: Point::in_view(x, y, call.view.id), raw_text }),
        Err(_) => Err(BackendError::NoCoordinateFound(raw_text)),
    }
}
