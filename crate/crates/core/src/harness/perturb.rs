//! Prediction instability under a thin black border.
//!
//! Each sample is grounded twice with a single inference: once on the
//! screenshot as-is and once with `border_px` of black added on all four
//! sides (the second prediction is shifted back into the original frame).
//! The study reports how far the two answers moved and how often
//! correctness flipped, binned by screenshot height and target area.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::GroundingSample;
use super::{worker_pool, HarnessError};
use crate::backend::{ground, DecodeParams, GroundingBackend, GroundingCall, Screenshot};
use crate::geometry::{point_in_rect, view_to_full, Point};
use crate::views::{Padding, Side, View, ViewSource};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationSettings {
    pub border_px: u32,
    /// Upper edges (inclusive) of the screenshot-height bins; one open bin follows.
    pub height_edges: Vec<u32>,
    /// Upper edges (exclusive) of the target-area bins in px^2; one open bin follows.
    pub area_edges: Vec<u64>,
    pub workers: usize,
    pub seed: u64,
    pub params: DecodeParams,
}

impl Default for PerturbationSettings {
    fn default() -> Self {
        Self {
            border_px: 28,
            height_edges: vec![1080, 1440, 2160],
            area_edges: vec![100, 400, 1600, 6400],
            workers: 4,
            seed: 0,
            params: DecodeParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbRecord {
    pub id: String,
    pub original: Option<Point>,
    pub perturbed: Option<Point>,
    pub distance: Option<f64>,
    pub correct_before: Option<bool>,
    pub correct_after: Option<bool>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipTable {
    pub correct_to_correct: usize,
    pub correct_to_wrong: usize,
    pub wrong_to_correct: usize,
    pub wrong_to_wrong: usize,
    /// `correct_to_wrong` over originally correct samples.
    pub correct_to_wrong_rate: f64,
    /// `wrong_to_correct` over originally wrong samples.
    pub wrong_to_correct_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceBin {
    pub label: String,
    pub count: usize,
    pub mean_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub settings: PerturbationSettings,
    pub backend: serde_json::Value,
    pub records: Vec<PerturbRecord>,
    /// Samples where both runs produced a coordinate.
    pub n_paired: usize,
    pub mean_shift: Option<f64>,
    pub flips: FlipTable,
    pub by_height: Vec<DistanceBin>,
    pub by_area: Vec<DistanceBin>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn bin_index<T: PartialOrd + Copy>(value: T, edges: &[T], inclusive: bool) -> usize {
    edges
        .iter()
        .position(|&e| if inclusive { value <= e } else { value < e })
        .unwrap_or(edges.len())
}

fn labels<T: std::fmt::Display>(edges: &[T], inclusive: bool, unit: &str) -> Vec<String> {
    let (le, gt) = if inclusive { ("<=", ">") } else { ("<", ">=") };
    let mut out: Vec<String> = edges.iter().map(|e| format!("{le}{e}{unit}")).collect();
    match edges.last() {
        Some(last) => out.push(format!("{gt}{last}{unit}")),
        None => out.push("all".into()),
    }
    out
}

fn bins(labels: Vec<String>, members: Vec<Vec<f64>>) -> Vec<DistanceBin> {
    labels
        .into_iter()
        .zip(members)
        .map(|(label, d)| DistanceBin {
            label,
            count: d.len(),
            mean_distance: (!d.is_empty()).then(|| d.iter().sum::<f64>() / d.len() as f64),
        })
        .collect()
}

fn single<B: GroundingBackend + ?Sized>(
    backend: &B,
    shot: &Screenshot,
    sample: &GroundingSample,
    view: &View,
    params: &DecodeParams,
) -> Result<Point, String> {
    let call = GroundingCall {
        screenshot: shot,
        instruction: &sample.instruction,
        view,
        target: Some(sample.gt_bbox),
        call_idx: 0,
        params,
    };
    let out = ground(backend, &call).map_err(|e| e.to_string())?;
    view_to_full(&out.parsed, view).map_err(|e| e.to_string())
}

fn study_one<B: GroundingBackend + ?Sized>(
    backend: &B,
    sample: &GroundingSample,
    settings: &PerturbationSettings,
) -> PerturbRecord {
    let mut rec = PerturbRecord {
        id: sample.id.clone(),
        original: None,
        perturbed: None,
        distance: None,
        correct_before: None,
        correct_after: None,
        failures: Vec::new(),
    };
    let shot = match sample.screenshot() {
        Ok(s) => s,
        Err(e) => {
            rec.failures.push(e.to_string());
            return rec;
        }
    };
    let original = View::original(shot.dims());
    let bordered = View {
        source: ViewSource::BorderPad(Side::All),
        pad: Padding::on(Side::All, settings.border_px),
        ..original
    };
    for (view, slot, correct) in [
        (&original, &mut rec.original, &mut rec.correct_before),
        (&bordered, &mut rec.perturbed, &mut rec.correct_after),
    ] {
        match single(backend, &shot, sample, view, &settings.params) {
            Ok(p) => {
                *correct = Some(point_in_rect(&p, &sample.gt_bbox));
                *slot = Some(p);
            }
            Err(e) => rec.failures.push(e),
        }
    }
    if let (Some(a), Some(b)) = (rec.original, rec.perturbed) {
        rec.distance = Some(a.distance(&b));
    }
    rec
}

pub fn perturbation_study<B: GroundingBackend + ?Sized>(
    samples: &[GroundingSample],
    backend: &B,
    settings: &PerturbationSettings,
    backend_info: serde_json::Value,
) -> Result<PerturbationReport, HarnessError> {
    let pool = worker_pool(settings.workers)?;
    let records: Vec<PerturbRecord> =
        pool.install(|| samples.par_iter().map(|s| study_one(backend, s, settings)).collect());

    let mut flips = [[0usize; 2]; 2];
    let mut height_members = vec![Vec::new(); settings.height_edges.len() + 1];
    let mut area_members = vec![Vec::new(); settings.area_edges.len() + 1];
    let mut distances = Vec::new();
    for (rec, sample) in records.iter().zip(samples) {
        let (Some(d), Some(before), Some(after)) = (rec.distance, rec.correct_before, rec.correct_after) else {
            continue;
        };
        distances.push(d);
        flips[before as usize][after as usize] += 1;
        height_members[bin_index(sample.dims.height, &settings.height_edges, true)].push(d);
        area_members[bin_index(sample.gt_bbox.area(), &settings.area_edges, false)].push(d);
    }

    let correct = flips[1][0] + flips[1][1];
    let wrong = flips[0][0] + flips[0][1];
    let flip_table = FlipTable {
        correct_to_correct: flips[1][1],
        correct_to_wrong: flips[1][0],
        wrong_to_correct: flips[0][1],
        wrong_to_wrong: flips[0][0],
        correct_to_wrong_rate: ratio(flips[1][0], correct),
        wrong_to_correct_rate: ratio(flips[0][1], wrong),
    };

    Ok(PerturbationReport {
        settings: settings.clone(),
        backend: backend_info,
        n_paired: distances.len(),
        mean_shift: (!distances.is_empty()).then(|| distances.iter().sum::<f64>() / distances.len() as f64),
        flips: flip_table,
        by_height: bins(labels(&settings.height_edges, true, "p"), height_members),
        by_area: bins(labels(&settings.area_edges, false, "px2"), area_members),
        records,
    })
}
