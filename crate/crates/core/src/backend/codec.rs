//! Materializes views as rasters and moves them over the wire as base64 PNG.

use std::io::Cursor;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use image::imageops::{self, FilterType};
use image::{ImageFormat, Rgb, RgbImage};

use super::BackendError;
use crate::views::View;

/// Crop `view.rect`, resize by `view.alpha` (bilinear), and paste onto a
/// black canvas offset by the view's padding.
pub fn materialize(src: &RgbImage, view: &View) -> RgbImage {
    let r = view.rect;
    let cropped = imageops::crop_imm(src, r.x, r.y, r.w, r.h).to_image();
    let canvas = view.canvas_dims();
    let inner_w = canvas.width - view.pad.left - view.pad.right;
    let inner_h = canvas.height - view.pad.top - view.pad.bottom;
    let scaled = if (inner_w, inner_h) == (r.w, r.h) {
        cropped
    } else {
        imageops::resize(&cropped, inner_w, inner_h, FilterType::Triangle)
    };
    if view.pad.is_zero() {
        return scaled;
    }
    let mut out = RgbImage::from_pixel(canvas.width, canvas.height, Rgb([0, 0, 0]));
    imageops::replace(&mut out, &scaled, view.pad.left as i64, view.pad.top as i64);
    out
}

pub fn encode_png_b64(img: &RgbImage) -> Result<String, BackendError> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).map_err(|e| BackendError::Codec(e.to_string()))?;
    Ok(STANDARD.encode(buf.into_inner()))
}

pub fn decode_png_b64(data: &str) -> Result<RgbImage, BackendError> {
    let bytes = STANDARD.decode(data).map_err(|e| BackendError::Codec(e.to_string()))?;
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
        .map_err(|e| BackendError::Codec(e.to_string()))?;
    Ok(img.to_rgb8())
}
