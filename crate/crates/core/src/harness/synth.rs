//! Seeded synthetic datasets for runs against the mock backend.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::GroundingSample;
use super::HarnessError;
use crate::geometry::{ImageDims, Rect};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n: usize,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    /// Inclusive target width range, px.
    pub target_w: (u32, u32),
    /// Inclusive target height range, px.
    pub target_h: (u32, u32),
    /// Minimum distance from a target to the image border, px.
    pub margin: u32,
    /// Cycled through as the `group` tag.
    pub groups: Vec<String>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n: 100,
            seed: 0,
            width: 3840,
            height: 2160,
            target_w: (8, 60),
            target_h: (8, 40),
            margin: 0,
            groups: vec!["dev".into(), "creative".into(), "cad".into(), "office".into()],
        }
    }
}

pub fn synthesize(spec: &SynthSpec) -> Result<Vec<GroundingSample>, HarnessError> {
    let dims = ImageDims::new(spec.width, spec.height).map_err(|e| HarnessError::Settings(e.to_string()))?;
    let (w_lo, w_hi) = spec.target_w;
    let (h_lo, h_hi) = spec.target_h;
    if w_lo == 0 || h_lo == 0 || w_lo > w_hi || h_lo > h_hi {
        return Err(HarnessError::Settings(format!("bad target size ranges {:?} / {:?}", spec.target_w, spec.target_h)));
    }
    let span_w = spec.width.checked_sub(w_hi + 2 * spec.margin);
    let span_h = spec.height.checked_sub(h_hi + 2 * spec.margin);
    let (Some(span_w), Some(span_h)) = (span_w, span_h) else {
        return Err(HarnessError::Settings("targets and margins do not fit in the image".into()));
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok((0..spec.n)
        .map(|i| {
            let w = rng.random_range(w_lo..=w_hi);
            let h = rng.random_range(h_lo..=h_hi);
            let x = spec.margin + rng.random_range(0..=span_w);
            let y = spec.margin + rng.random_range(0..=span_h);
            let id = format!("synth-{:05}", i);
            let mut tags = BTreeMap::new();
            if !spec.groups.is_empty() {
                tags.insert("group".to_string(), spec.groups[i % spec.groups.len()].clone());
            }
            GroundingSample {
                image_path: PathBuf::from(format!("synthetic/{id}.png")),
                instruction: format!("click target {i}"),
                id,
                gt_bbox: Rect::new(x, y, w, h),
                tags,
                dims,
            }
        })
        .collect())
}
