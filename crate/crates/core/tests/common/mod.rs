//! Shared oracles for the integration and acceptance tests.

#![allow(dead_code)]

use mvground_core::clustering::Prediction;
use mvground_core::geometry::{ImageDims, Point, Rect};
use mvground_core::views::{Padding, View, ViewSource};
use proptest::prelude::*;

/// Reference: keeps `U` as an ordered list and `G` as a list, recomputing the
/// center from scratch before every comparison.
pub fn reference(points: &[(f64, f64)], tau: f64) -> Vec<Vec<usize>> {
    let mut unassigned: Vec<usize> = (0..points.len()).collect();
    let mut clusters = Vec::new();
    while !unassigned.is_empty() {
        let seed = unassigned[0];
        let mut g = vec![seed];
        unassigned.retain(|&i| i != seed);
        loop {
            let prev = g.clone();
            for p in unassigned.clone() {
                let cx = g.iter().map(|&i| points[i].0).sum::<f64>() / g.len() as f64;
                let cy = g.iter().map(|&i| points[i].1).sum::<f64>() / g.len() as f64;
                let d = ((points[p].0 - cx).powi(2) + (points[p].1 - cy).powi(2)).sqrt();
                if d <= tau {
                    g.push(p);
                    unassigned.retain(|&i| i != p);
                }
            }
            if g == prev {
                break;
            }
        }
        clusters.push(g);
    }
    clusters
}

pub fn point_sets() -> impl Strategy<Value = (Vec<(f64, f64)>, f64)> {
    // a mix of tight groups and scattered points so clusters of every size occur
    let pt = prop_oneof![
        (0.0f64..40.0, 0.0f64..40.0),
        (0.0f64..400.0, 0.0f64..400.0),
        (1000.0f64..1010.0, 500.0f64..510.0),
    ];
    (prop::collection::vec(pt, 1..=12), 1.0f64..100.0)
}

pub fn preds(pts: &[(f64, f64)]) -> Vec<Prediction> {
    pts.iter()
        .enumerate()
        .map(|(i, &(x, y))| Prediction {
            view_id: i,
            point_view: Point::in_view(x, y, i),
            point_full: Point::full(x, y),
            raw_text: String::new(),
        })
        .collect()
}

pub fn views(n: usize, ranks: &[usize]) -> Vec<View> {
    let dims = ImageDims::new(4000, 4000).unwrap();
    (0..n)
        .map(|i| {
            if i == 0 {
                View::original(dims)
            } else {
                View {
                    id: i,
                    rect: Rect::new(0, 0, 1280, 720),
                    alpha: 2.0,
                    rank: ranks.get(i).copied().unwrap_or(0),
                    source: ViewSource::AttentionCrop,
                    pad: Padding::default(),
                }
            }
        })
        .collect()
}
