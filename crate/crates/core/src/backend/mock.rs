//! Seeded stand-in for a grounding model.
//!
//! Each call is correct with probability
//! `q = q_lo + (q_hi - q_lo) * min(1, a / area_ref)` where `a` is the area of
//! the target's visible part as the model sees it (scaled by `alpha^2`).
//! A correct answer is uniform inside the visible target, a wrong one is
//! uniform over the view's content. Answers are floored to integer view
//! pixels, the way models print them.
//!
//! Every draw comes from a fresh ChaCha8 stream seeded with
//! `SHA-256(seed, stream tag, key, ...)`, so calls share no generator state
//! and can run in any order or concurrently.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AttentionCall, BackendError, GroundingBackend, GroundingCall, Screenshot};
use crate::attention::{RawAttentionRows, RowKind};
use crate::geometry::{full_to_view, ImageDims, PatchGrid, Point, Rect};
use crate::views::View;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WrongMode {
    #[default]
    UniformInView,
}

/// What the per-call random stream is keyed on besides the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyMode {
    /// Source screenshot, view id and call index. Padding or re-encoding the
    /// same view does not change the answer.
    #[default]
    ViewIndex,
    /// The exact raster sent to the model; any pixel change reshuffles.
    ImageBytes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockAttentionSpec {
    pub patch: u32,
    pub heads: usize,
    /// Width of the attention blob, in patches.
    pub sigma_patches: f64,
    /// Amplitude of the uniform per-head logit noise.
    pub noise: f64,
    /// Probability that the blob sits on the target rather than somewhere random.
    pub hit_prob: f64,
}

impl Default for MockAttentionSpec {
    fn default() -> Self {
        Self { patch: 28, heads: 4, sigma_patches: 3.0, noise: 0.2, hit_prob: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockModelSpec {
    pub seed: u64,
    pub q_lo: f64,
    pub q_hi: f64,
    /// Visible target area (view pixels squared) at which `q` reaches `q_hi`.
    pub area_ref: f64,
    pub wrong_mode: WrongMode,
    pub key_mode: KeyMode,
    pub attention: MockAttentionSpec,
}

impl Default for MockModelSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            q_lo: 0.25,
            q_hi: 0.9,
            area_ref: 2500.0,
            wrong_mode: WrongMode::UniformInView,
            key_mode: KeyMode::ViewIndex,
            attention: MockAttentionSpec::default(),
        }
    }
}

impl MockModelSpec {
    /// Same correctness probability regardless of target size.
    pub fn constant(seed: u64, q: f64) -> Self {
        Self { seed, q_lo: q, q_hi: q, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.q_lo) || !(0.0..=1.0).contains(&self.q_hi) || self.q_lo > self.q_hi {
            return Err(format!("need 0 <= q_lo <= q_hi <= 1, got {} / {}", self.q_lo, self.q_hi));
        }
        if self.area_ref.is_nan() || self.area_ref <= 0.0 {
            return Err(format!("area_ref must be positive, got {}", self.area_ref));
        }
        Ok(())
    }

    fn stream(&self, tag: &[u8], parts: &[&[u8]]) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(tag);
        for p in parts {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p);
        }
        ChaCha8Rng::from_seed(h.finalize().into())
    }

    /// Correctness probability for a call on `view` with target `gt`.
    pub fn correct_prob(&self, view: &View, gt: Option<&Rect>) -> f64 {
        match gt.and_then(|g| g.intersection(&view.rect)) {
            None => 0.0,
            Some(visible) => {
                let area = visible.area() as f64 * view.alpha * view.alpha;
                self.q_lo + (self.q_hi - self.q_lo) * (area / self.area_ref).min(1.0)
            }
        }
    }
}

fn uniform_in(rng: &mut ChaCha8Rng, r: &Rect) -> Point {
    let u: f64 = rng.random();
    let v: f64 = rng.random();
    Point::full(r.x as f64 + u * r.w as f64, r.y as f64 + v * r.h as f64)
}

/// One simulated answer, in the frame of `view`. `key` identifies the input
/// (see [`KeyMode`]).
pub fn mock_predict(spec: &MockModelSpec, key: &[u8], view: &View, gt: Option<&Rect>, call_idx: u32) -> Point {
    let mut rng = spec.stream(b"ground", &[key, &(view.id as u64).to_le_bytes(), &call_idx.to_le_bytes()]);
    let q = spec.correct_prob(view, gt);
    let coin: f64 = rng.random();
    let visible = gt.and_then(|g| g.intersection(&view.rect));
    let region = match visible {
        Some(v) if coin < q => v,
        _ => match spec.wrong_mode {
            WrongMode::UniformInView => view.rect,
        },
    };
    let full = uniform_in(&mut rng, &region);
    let p = full_to_view(&full, view).expect("full-frame point");
    Point::in_view(p.x.floor(), p.y.floor(), view.id)
}

/// Head-wise attention logits: a Gaussian blob (in patch units) around the
/// target center, or around a random location with probability
/// `1 - hit_prob`, plus uniform noise.
pub fn mock_attention(spec: &MockModelSpec, key: &[u8], dims: ImageDims, gt: Option<&Rect>) -> RawAttentionRows {
    let a = &spec.attention;
    let grid = PatchGrid::covering(dims, a.patch);
    let mut rng = spec.stream(b"attention", &[key]);
    let hit: f64 = rng.random();
    let peak = match gt {
        Some(g) if hit < a.hit_prob => g.center(),
        _ => uniform_in(&mut rng, &dims.full_rect()),
    };
    let (px, py) = (peak.x / a.patch as f64, peak.y / a.patch as f64);
    let two_sigma2 = 2.0 * a.sigma_patches * a.sigma_patches;
    let heads = a.heads.max(1);
    let mut values = Vec::with_capacity(heads * grid.len());
    for _ in 0..heads {
        for row in 0..grid.rows {
            for col in 0..grid.cols {
                let dx = col as f64 + 0.5 - px;
                let dy = row as f64 + 0.5 - py;
                let noise: f64 = rng.random_range(-1.0..=1.0);
                values.push(-(dx * dx + dy * dy) / two_sigma2 + a.noise * noise);
            }
        }
    }
    RawAttentionRows { grid, heads, model_dim: None, kind: RowKind::Logits, values }
}

#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    pub spec: MockModelSpec,
}

impl MockBackend {
    pub fn new(spec: MockModelSpec) -> Self {
        Self { spec }
    }

    fn call_key(&self, screenshot: &Screenshot, view: &View) -> [u8; 32] {
        match self.spec.key_mode {
            KeyMode::ViewIndex => *screenshot.digest(),
            KeyMode::ImageBytes => screenshot.view_digest(view),
        }
    }

    pub fn predict(&self, call: &GroundingCall<'_>) -> Point {
        let key = self.call_key(call.screenshot, call.view);
        // Byte-keyed streams ignore the view id: only the raster matters.
        let view = match self.spec.key_mode {
            KeyMode::ViewIndex => *call.view,
            KeyMode::ImageBytes => View { id: 0, ..*call.view },
        };
        let p = mock_predict(&self.spec, &key, &view, call.target.as_ref(), call.call_idx);
        Point::in_view(p.x, p.y, call.view.id)
    }
}

impl GroundingBackend for MockBackend {
    fn generate(&self, call: &GroundingCall<'_>) -> Result<String, BackendError> {
        let p = self.predict(call);
        Ok(format!("({}, {})", p.x as i64, p.y as i64))
    }

    fn attention(&self, call: &AttentionCall<'_>) -> Result<RawAttentionRows, BackendError> {
        Ok(mock_attention(
            &self.spec,
            call.screenshot.digest(),
            call.screenshot.dims(),
            call.target.as_ref(),
        ))
    }
}
