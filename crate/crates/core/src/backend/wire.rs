//! JSON bodies of the backend protocol.
//!
//! `POST /v1/ground` and `POST /v1/attention`; errors are non-2xx with
//! `{"error": "..."}`. Coordinates are pixels of the image that was sent.

use serde::{Deserialize, Serialize};

use super::{BackendError, DecodeParams};
use crate::attention::{RawAttentionRows, RowKind};
use crate::config::QueryMode;
use crate::geometry::PatchGrid;

pub const GROUND_PATH: &str = "/v1/ground";
pub const ATTENTION_PATH: &str = "/v1/attention";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundRequest {
    pub image_b64: String,
    pub instruction: String,
    #[serde(default)]
    pub params: DecodeParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundResponse {
    pub raw_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRequest {
    pub image_b64: String,
    pub instruction: String,
    pub layer: u32,
    pub query_mode: QueryMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: u32,
    pub cols: u32,
    pub patch_w: u32,
    pub patch_h: u32,
}

/// Either a flat row-major `H * L` array or `H` nested rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttentionValues {
    Flat(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionResponse {
    pub grid: GridSpec,
    pub kind: RowKind,
    pub heads: usize,
    pub values: AttentionValues,
    /// Query mode the bridge actually used, when it had to fall back.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_mode: Option<QueryMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

impl AttentionResponse {
    pub fn into_rows(self) -> Result<RawAttentionRows, BackendError> {
        let values = match self.values {
            AttentionValues::Flat(v) => v,
            AttentionValues::Rows(rows) => {
                if rows.len() != self.heads {
                    return Err(BackendError::Protocol(format!(
                        "{} attention rows for {} heads",
                        rows.len(),
                        self.heads
                    )));
                }
                rows.into_iter().flatten().collect()
            }
        };
        let rows = RawAttentionRows {
            grid: PatchGrid {
                rows: self.grid.rows,
                cols: self.grid.cols,
                patch_w: self.grid.patch_w,
                patch_h: self.grid.patch_h,
            },
            heads: self.heads,
            model_dim: None,
            kind: self.kind,
            values,
        };
        rows.validate().map_err(|e| BackendError::Protocol(e.to_string()))?;
        Ok(rows)
    }

    pub fn from_rows(rows: &RawAttentionRows) -> Self {
        Self {
            grid: GridSpec {
                rows: rows.grid.rows,
                cols: rows.grid.cols,
                patch_w: rows.grid.patch_w,
                patch_h: rows.grid.patch_h,
            },
            kind: rows.kind,
            heads: rows.heads,
            values: AttentionValues::Flat(rows.values.clone()),
            fallback_mode: None,
        }
    }
}
