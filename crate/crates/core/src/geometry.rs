//! Coordinate-frame math shared by every stage.
//!
//! Two frames exist: the full screenshot ("full-image frame") and the raster
//! a backend actually sees for one view ("view frame"). A view frame is the
//! crop rectangle scaled by the view's resize factor and then embedded in a
//! black canvas with optional per-side padding.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::views::View;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("token index {index} out of range for a {rows}x{cols} grid")]
    TokenOutOfRange { index: usize, rows: u32, cols: u32 },
    #[error("point is in frame {found:?}, expected {expected:?}")]
    FrameMismatch { expected: Frame, found: Frame },
    #[error("invalid dimensions {0}x{1}")]
    InvalidDims(u32, u32),
    #[error("non-finite coordinate")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageDims {
    pub width: u32,
    pub height: u32,
}

impl ImageDims {
    pub fn new(width: u32, height: u32) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidDims(width, height));
        }
        Ok(Self { width, height })
    }

    pub fn min_side(&self) -> u32 {
        self.width.min(self.height)
    }

    pub fn full_rect(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }
}

/// Which raster a point's coordinates refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    FullImage,
    View(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub frame: Frame,
}

impl Point {
    pub fn full(x: f64, y: f64) -> Self {
        Self { x, y, frame: Frame::FullImage }
    }

    pub fn in_view(x: f64, y: f64, view_id: usize) -> Self {
        Self { x, y, frame: Frame::View(view_id) }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self { x: self.x + dx, y: self.y + dy, frame: self.frame }
    }
}

/// Integer rectangle, top-left anchored, in full-image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        (x1 > x0 && y1 > y0).then(|| Rect::new(x0, y0, x1 - x0, y1 - y0))
    }

    pub fn fits_in(&self, dims: ImageDims) -> bool {
        self.right() <= dims.width && self.bottom() <= dims.height
    }

    pub fn center(&self) -> Point {
        Point::full(self.x as f64 + self.w as f64 / 2.0, self.y as f64 + self.h as f64 / 2.0)
    }
}

/// Visual-token layout of an image: `rows x cols` patches, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub rows: u32,
    pub cols: u32,
    pub patch_w: u32,
    pub patch_h: u32,
}

impl PatchGrid {
    /// Smallest grid of `patch x patch` cells covering `dims`.
    pub fn covering(dims: ImageDims, patch: u32) -> Self {
        let patch = patch.max(1);
        Self {
            rows: dims.height.div_ceil(patch),
            cols: dims.width.div_ceil(patch),
            patch_w: patch,
            patch_h: patch,
        }
    }

    pub fn len(&self) -> usize {
        self.rows as usize * self.cols as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether the grid spans the image to within one patch on both axes.
    pub fn covers(&self, dims: ImageDims) -> bool {
        let span_w = self.cols as u64 * self.patch_w as u64;
        let span_h = self.rows as u64 * self.patch_h as u64;
        span_w + self.patch_w as u64 >= dims.width as u64
            && span_h + self.patch_h as u64 >= dims.height as u64
    }
}

pub fn patch_center(grid: &PatchGrid, token_idx: usize) -> Result<Point, GeometryError> {
    if token_idx >= grid.len() {
        return Err(GeometryError::TokenOutOfRange {
            index: token_idx,
            rows: grid.rows,
            cols: grid.cols,
        });
    }
    let row = token_idx / grid.cols as usize;
    let col = token_idx % grid.cols as usize;
    Ok(Point::full(
        (col as f64 + 0.5) * grid.patch_w as f64,
        (row as f64 + 0.5) * grid.patch_h as f64,
    ))
}

/// A `w x h` window centered on `center`, shifted the minimal amount needed
/// to lie inside the image. Images smaller than the window on either axis
/// yield the whole image.
pub fn clamp_crop(center: Point, w: u32, h: u32, dims: ImageDims) -> Rect {
    if dims.width < w || dims.height < h {
        return dims.full_rect();
    }
    let place = |c: f64, size: u32, limit: u32| -> u32 {
        let start = (c - size as f64 / 2.0).round();
        start.clamp(0.0, (limit - size) as f64) as u32
    };
    Rect::new(
        place(center.x, w, dims.width),
        place(center.y, h, dims.height),
        w,
        h,
    )
}

/// Maps a point the backend returned for `view` back into the full image.
pub fn view_to_full(p: &Point, view: &View) -> Result<Point, GeometryError> {
    if p.frame != Frame::View(view.id) {
        return Err(GeometryError::FrameMismatch { expected: Frame::View(view.id), found: p.frame });
    }
    if !p.is_finite() {
        return Err(GeometryError::NonFinite);
    }
    Ok(Point::full(
        view.rect.x as f64 + (p.x - view.pad.left as f64) / view.alpha,
        view.rect.y as f64 + (p.y - view.pad.top as f64) / view.alpha,
    ))
}

/// Inverse of [`view_to_full`].
pub fn full_to_view(p: &Point, view: &View) -> Result<Point, GeometryError> {
    if p.frame != Frame::FullImage {
        return Err(GeometryError::FrameMismatch { expected: Frame::FullImage, found: p.frame });
    }
    Ok(Point::in_view(
        (p.x - view.rect.x as f64) * view.alpha + view.pad.left as f64,
        (p.y - view.rect.y as f64) * view.alpha + view.pad.top as f64,
        view.id,
    ))
}

/// Half-open containment: the right and bottom edges are outside.
pub fn point_in_rect(p: &Point, r: &Rect) -> bool {
    p.x >= r.x as f64 && p.x < r.right() as f64 && p.y >= r.y as f64 && p.y < r.bottom() as f64
}
