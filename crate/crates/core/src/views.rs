//! View proposal: attention-guided crops and the border-padding fallback.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attention::{top_k_tokens, AttentionScores};
use crate::config::MvpConfig;
use crate::geometry::{clamp_crop, patch_center, point_in_rect, GeometryError, ImageDims, Rect};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProposalError {
    #[error("attention grid {rows}x{cols} of {patch_w}x{patch_h} patches does not cover a {width}x{height} image")]
    GridMismatch { rows: u32, cols: u32, patch_w: u32, patch_h: u32, width: u32, height: u32 },
    #[error("score vector has {found} entries, grid has {expected}")]
    ScoreLength { expected: usize, found: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    Top,
    Bottom,
    /// All four sides at once; used by the perturbation study.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "side", rename_all = "snake_case")]
pub enum ViewSource {
    Original,
    AttentionCrop,
    BorderPad(Side),
}

/// Black margins added around the (resized) crop, in view pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Padding {
    pub left: u32,
    pub top: u32,
    pub right: u32,
    pub bottom: u32,
}

impl Padding {
    pub fn on(side: Side, px: u32) -> Self {
        let mut p = Padding::default();
        match side {
            Side::Left => p.left = px,
            Side::Right => p.right = px,
            Side::Top => p.top = px,
            Side::Bottom => p.bottom = px,
            Side::All => p = Padding { left: px, top: px, right: px, bottom: px },
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        *self == Padding::default()
    }
}

/// One input the backend sees: `rect` of the screenshot, scaled by `alpha`,
/// then padded by `pad`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct View {
    pub id: usize,
    pub rect: Rect,
    pub alpha: f64,
    /// Number of top-k patch centers inside `rect`.
    pub rank: usize,
    pub source: ViewSource,
    #[serde(default, skip_serializing_if = "Padding::is_zero")]
    pub pad: Padding,
}

impl View {
    /// The unmodified screenshot. Always id 0.
    pub fn original(dims: ImageDims) -> Self {
        Self {
            id: 0,
            rect: dims.full_rect(),
            alpha: 1.0,
            rank: 0,
            source: ViewSource::Original,
            pad: Padding::default(),
        }
    }

    /// Size of the raster the backend receives.
    pub fn canvas_dims(&self) -> ImageDims {
        let scale = |v: u32| ((v as f64 * self.alpha).round() as u32).max(1);
        ImageDims {
            width: scale(self.rect.w) + self.pad.left + self.pad.right,
            height: scale(self.rect.h) + self.pad.top + self.pad.bottom,
        }
    }

    pub fn is_original(&self) -> bool {
        self.source == ViewSource::Original
    }
}

struct Candidate {
    seed: usize,
    score: f64,
    rect: Rect,
    rank: usize,
}

/// Attention-guided view proposal.
///
/// Crops a `view_w x view_h` window around each of the top-k patch centers,
/// drops duplicate windows, ranks each by how many top-k centers it
/// contains, and keeps the best `m`. Ties go to the window whose seed token
/// scored higher, then to the lower seed index. Zero-score tokens never seed
/// a window. Returned ids start at 1 (0 is reserved for the original).
pub fn propose_views(
    scores: &AttentionScores,
    dims: ImageDims,
    cfg: &MvpConfig,
) -> Result<Vec<View>, ProposalError> {
    let grid = scores.grid;
    if scores.scores.len() != grid.len() {
        return Err(ProposalError::ScoreLength { expected: grid.len(), found: scores.scores.len() });
    }
    if !grid.covers(dims) {
        return Err(ProposalError::GridMismatch {
            rows: grid.rows,
            cols: grid.cols,
            patch_w: grid.patch_w,
            patch_h: grid.patch_h,
            width: dims.width,
            height: dims.height,
        });
    }

    let top: Vec<usize> = top_k_tokens(scores, cfg.k)
        .into_iter()
        .filter(|&i| scores.scores[i] > 0.0)
        .collect();
    let centers = top
        .iter()
        .map(|&i| patch_center(&grid, i))
        .collect::<Result<Vec<_>, _>>()?;

    let mut candidates: Vec<Candidate> = Vec::with_capacity(top.len());
    for (&seed, &center) in top.iter().zip(&centers) {
        let rect = clamp_crop(center, cfg.view_w, cfg.view_h, dims);
        // `top` is already in descending score order, so the first seed to
        // produce a rect is the one that wins its tie-break.
        if candidates.iter().any(|c| c.rect == rect) {
            continue;
        }
        let rank = centers.iter().filter(|p| point_in_rect(p, &rect)).count();
        candidates.push(Candidate { seed, score: scores.scores[seed], rect, rank });
    }

    candidates.sort_by(|a, b| {
        b.rank
            .cmp(&a.rank)
            .then(b.score.total_cmp(&a.score))
            .then(a.seed.cmp(&b.seed))
    });

    Ok(candidates
        .into_iter()
        .take(cfg.m)
        .enumerate()
        .map(|(i, c)| View {
            id: i + 1,
            rect: c.rect,
            alpha: cfg.alpha,
            rank: c.rank,
            source: ViewSource::AttentionCrop,
            pad: Padding::default(),
        })
        .collect())
}

/// Four views of the full screenshot, each with `border_px` of black added
/// on one side (left, right, top, bottom). Ids start at 1.
pub fn border_pad_views(dims: ImageDims, cfg: &MvpConfig) -> Vec<View> {
    [Side::Left, Side::Right, Side::Top, Side::Bottom]
        .into_iter()
        .enumerate()
        .map(|(i, side)| View {
            id: i + 1,
            rect: dims.full_rect(),
            alpha: 1.0,
            rank: 0,
            source: ViewSource::BorderPad(side),
            pad: Padding::on(side, cfg.border_px),
        })
        .collect()
}

/// 1.0 if any view fully contains `gt`, else 0.0. Averaged over samples
/// this is the target containing ratio.
pub fn containing_ratio(views: &[View], gt: &Rect) -> f64 {
    if views.iter().any(|v| v.rect.contains_rect(gt)) {
        1.0
    } else {
        0.0
    }
}
