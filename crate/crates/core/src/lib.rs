//! Multi-view prediction for GUI grounding.
//!
//! A grounding model is queried on the full screenshot and on several
//! attention-selected, upscaled crops of it. The answers are mapped back to
//! screenshot pixels and the largest spatially consistent group wins.
//!
//! * [`attention`] averages per-head attention and picks top-k tokens.
//! * [`views`] turns those tokens into ranked crop views.
//! * [`backend`] talks to a model (HTTP or the seeded mock).
//! * [`clustering`] groups answers and picks the final point.
//! * [`pipeline`] wires the stages together for one screenshot.
//! * [`harness`] evaluates datasets and runs the ablations.

pub mod attention;
pub mod backend;
pub mod clustering;
pub mod config;
pub mod geometry;
pub mod harness;
pub mod pipeline;
pub mod views;

pub use attention::{mean_heads, softmax_row, top_k_tokens, AttentionScores, RawAttentionRows, RowKind};
pub use backend::{GroundingBackend, HttpBackend, MockBackend, MockModelSpec, Screenshot};
pub use clustering::{aggregate_average, aggregate_random, cluster_points, decide, Cluster, ClusterSet, Prediction};
pub use config::{LowResStrategy, MvpConfig, QueryMode};
pub use geometry::{clamp_crop, patch_center, point_in_rect, view_to_full, Frame, ImageDims, PatchGrid, Point, Rect};
pub use pipeline::{run_mvp, Aggregation, MvpInput, MvpResult, PipelineError, RunOptions, ViewStrategy};
pub use views::{border_pad_views, containing_ratio, propose_views, View, ViewSource};
