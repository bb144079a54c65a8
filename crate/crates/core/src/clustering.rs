//! Multi-coordinate clustering and the final decision rule, plus the
//! average / random aggregators used as ablation baselines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Frame, Point};
use crate::views::View;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("no predictions to aggregate")]
    Empty,
    #[error("tau must be positive, got {0}")]
    BadTau(f64),
    #[error("prediction {0} is not in the full-image frame")]
    WrongFrame(usize),
}

/// One backend answer, kept in both frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub view_id: usize,
    pub point_view: Point,
    pub point_full: Point,
    pub raw_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Indices into the prediction list, in absorption order; the first is the seed.
    pub members: Vec<usize>,
    pub centroid: Point,
}

impl Cluster {
    pub fn seed(&self) -> usize {
        self.members[0]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSet {
    pub clusters: Vec<Cluster>,
    /// View id of each prediction, in the order clustering saw them.
    pub input_order: Vec<usize>,
}

/// A point joining a cluster, with the centroid it was measured against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Absorption {
    pub cluster: usize,
    pub member: usize,
    pub centroid_before: Point,
    pub distance: f64,
}

fn mean(points: impl Iterator<Item = Point>) -> Point {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for p in points {
        sx += p.x;
        sy += p.y;
        n += 1;
    }
    Point::full(sx / n as f64, sy / n as f64)
}

/// Greedy threshold clustering over full-image points, returning the
/// absorption trace alongside the partition.
///
/// The first unassigned point seeds a cluster. Remaining points are swept in
/// input order; each one within `tau` of the current centroid joins and the
/// centroid is updated before the next comparison. Sweeps repeat until one
/// absorbs nothing, then the next cluster is opened.
pub fn cluster_traced(points: &[Point], tau: f64) -> Result<(Vec<Cluster>, Vec<Absorption>), ClusterError> {
    if points.is_empty() {
        return Err(ClusterError::Empty);
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(ClusterError::BadTau(tau));
    }
    if let Some(i) = points.iter().position(|p| p.frame != Frame::FullImage) {
        return Err(ClusterError::WrongFrame(i));
    }

    let mut unassigned: Vec<usize> = (0..points.len()).collect();
    let mut clusters = Vec::new();
    let mut trace = Vec::new();

    while !unassigned.is_empty() {
        let seed = unassigned.remove(0);
        let mut members = vec![seed];
        let (mut sx, mut sy) = (points[seed].x, points[seed].y);
        loop {
            let before = members.len();
            let mut i = 0;
            while i < unassigned.len() {
                let idx = unassigned[i];
                let n = members.len() as f64;
                let center = Point::full(sx / n, sy / n);
                let d = points[idx].distance(&center);
                if d <= tau {
                    trace.push(Absorption {
                        cluster: clusters.len(),
                        member: idx,
                        centroid_before: center,
                        distance: d,
                    });
                    members.push(idx);
                    sx += points[idx].x;
                    sy += points[idx].y;
                    unassigned.remove(i);
                } else {
                    i += 1;
                }
            }
            if members.len() == before {
                break;
            }
        }
        let centroid = mean(members.iter().map(|&i| points[i]));
        clusters.push(Cluster { members, centroid });
    }
    Ok((clusters, trace))
}

pub fn cluster_points(preds: &[Prediction], tau: f64) -> Result<ClusterSet, ClusterError> {
    let points: Vec<Point> = preds.iter().map(|p| p.point_full).collect();
    let (clusters, _) = cluster_traced(&points, tau)?;
    Ok(ClusterSet { clusters, input_order: preds.iter().map(|p| p.view_id).collect() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub point: Point,
    /// Index into `ClusterSet::clusters`.
    pub cluster: usize,
}

/// Centroid of the largest cluster.
///
/// Size ties go to the cluster whose members came from views with the
/// highest summed rank (the original image counts as rank 0); then to the
/// cluster holding the original-image prediction; then to the lowest seed
/// index.
pub fn decide(cs: &ClusterSet, preds: &[Prediction], views: &[View]) -> Result<Decision, ClusterError> {
    let rank_of = |view_id: usize| {
        views.iter().find(|v| v.id == view_id).map_or(0, |v| if v.is_original() { 0 } else { v.rank })
    };
    let is_original = |view_id: usize| views.iter().any(|v| v.id == view_id && v.is_original());

    let key = |c: &Cluster| {
        let rank_sum: usize = c.members.iter().map(|&i| rank_of(preds[i].view_id)).sum();
        let has_original = c.members.iter().any(|&i| is_original(preds[i].view_id));
        (c.len(), rank_sum, has_original, std::cmp::Reverse(c.seed()))
    };

    let (cluster, best) = cs
        .clusters
        .iter()
        .enumerate()
        .max_by_key(|(_, c)| key(c))
        .ok_or(ClusterError::Empty)?;
    Ok(Decision { point: best.centroid, cluster })
}

/// Arithmetic mean of every full-frame prediction.
pub fn aggregate_average(preds: &[Prediction]) -> Result<Point, ClusterError> {
    if preds.is_empty() {
        return Err(ClusterError::Empty);
    }
    Ok(mean(preds.iter().map(|p| p.point_full)))
}

/// Picks one prediction uniformly at random. The generator is ChaCha8
/// seeded from `seed` via `SeedableRng::seed_from_u64`, so the choice is
/// stable across platforms and releases of this crate.
pub fn aggregate_random(preds: &[Prediction], seed: u64) -> Result<Point, ClusterError> {
    if preds.is_empty() {
        return Err(ClusterError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(preds[rng.random_range(0..preds.len())].point_full)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ImageDims, Rect};
    use crate::views::{Padding, ViewSource};

    fn pred(view_id: usize, x: f64, y: f64) -> Prediction {
        Prediction {
            view_id,
            point_view: Point::in_view(x, y, view_id),
            point_full: Point::full(x, y),
            raw_text: format!("({x}, {y})"),
        }
    }

    fn preds(pts: &[(f64, f64)]) -> Vec<Prediction> {
        pts.iter().enumerate().map(|(i, &(x, y))| pred(i, x, y)).collect()
    }

    fn crop(id: usize, rank: usize) -> View {
        View {
            id,
            rect: Rect::new(0, 0, 100, 100),
            alpha: 2.0,
            rank,
            source: ViewSource::AttentionCrop,
            pad: Padding::default(),
        }
    }

    #[test]
    fn identical_points_form_one_cluster() {
        let cs = cluster_points(&preds(&[(5.0, 5.0); 3]), 3.0).unwrap();
        assert_eq!(cs.clusters.len(), 1);
        assert_eq!(cs.clusters[0].centroid, Point::full(5.0, 5.0));
        assert_eq!(cs.input_order, vec![0, 1, 2]);
    }

    #[test]
    fn empty_and_bad_tau() {
        assert_eq!(cluster_points(&[], 14.0), Err(ClusterError::Empty));
        assert_eq!(cluster_points(&preds(&[(0.0, 0.0)]), 0.0), Err(ClusterError::BadTau(0.0)));
        let mut p = preds(&[(0.0, 0.0)]);
        p[0].point_full = Point::in_view(0.0, 0.0, 0);
        assert_eq!(cluster_points(&p, 1.0), Err(ClusterError::WrongFrame(0)));
    }

    #[test]
    fn later_sweep_picks_up_points_that_drift_into_range() {
        // (0,0) seeds; (20,0) is 20 away and skipped; (10,0) joins -> centroid (5,0);
        // the second sweep sees (20,0) at 15 > 14 and stops. With tau = 15 it joins
        // on the second sweep.
        let p = preds(&[(0.0, 0.0), (20.0, 0.0), (10.0, 0.0)]);
        let cs = cluster_points(&p, 14.0).unwrap();
        assert_eq!(cs.clusters.len(), 2);
        let cs = cluster_points(&p, 15.0).unwrap();
        assert_eq!(cs.clusters.len(), 1);
        assert_eq!(cs.clusters[0].members, vec![0, 2, 1]);
    }

    #[test]
    fn decide_prefers_largest() {
        let p = preds(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0), (500.0, 500.0), (900.0, 0.0)]);
        let cs = cluster_points(&p, 14.0).unwrap();
        let views: Vec<View> = (0..5).map(|i| crop(i, 10)).collect();
        let d = decide(&cs, &p, &views).unwrap();
        assert_eq!(d.point, Point::full(1.0, 1.0 / 3.0));
    }

    #[test]
    fn decide_breaks_size_ties_by_rank() {
        let p = vec![pred(1, 0.0, 0.0), pred(2, 300.0, 300.0)];
        let views = vec![crop(1, 2), crop(2, 5)];
        let cs = cluster_points(&p, 14.0).unwrap();
        assert_eq!(decide(&cs, &p, &views).unwrap().point, Point::full(300.0, 300.0));
    }

    #[test]
    fn decide_falls_back_to_original_then_seed() {
        let dims = ImageDims::new(1000, 1000).unwrap();
        let p = vec![pred(1, 0.0, 0.0), pred(0, 300.0, 300.0), pred(2, 600.0, 600.0)];
        // every crop has rank 0 here, so only the original marker separates them
        let views = vec![View::original(dims), crop(1, 0), crop(2, 0)];
        let cs = cluster_points(&p, 14.0).unwrap();
        assert_eq!(decide(&cs, &p, &views).unwrap().point, Point::full(300.0, 300.0));

        let p = vec![pred(1, 0.0, 0.0), pred(2, 600.0, 600.0)];
        let cs = cluster_points(&p, 14.0).unwrap();
        let d = decide(&cs, &p, &views).unwrap();
        assert_eq!((d.cluster, d.point), (0, Point::full(0.0, 0.0)));
    }

    #[test]
    fn decide_on_consensus_returns_the_point() {
        let p = preds(&[(42.5, 17.0); 5]);
        let views: Vec<View> = (0..5).map(|i| crop(i, i)).collect();
        let cs = cluster_points(&p, 14.0).unwrap();
        assert_eq!(decide(&cs, &p, &views).unwrap().point, Point::full(42.5, 17.0));
    }

    #[test]
    fn averages() {
        assert_eq!(aggregate_average(&preds(&[(0.0, 0.0), (10.0, 10.0)])).unwrap(), Point::full(5.0, 5.0));
        assert_eq!(aggregate_average(&preds(&[(3.0, 4.0)])).unwrap(), Point::full(3.0, 4.0));
        assert_eq!(
            aggregate_average(&preds(&[(0.0, 0.0), (0.0, 0.0), (30.0, 0.0)])).unwrap(),
            Point::full(10.0, 0.0)
        );
        assert_eq!(aggregate_average(&[]), Err(ClusterError::Empty));
    }

    #[test]
    fn random_selection() {
        assert_eq!(aggregate_random(&preds(&[(3.0, 4.0)]), 99).unwrap(), Point::full(3.0, 4.0));
        let two = preds(&[(0.0, 0.0), (10.0, 10.0)]);
        let first = aggregate_random(&two, 7).unwrap();
        for _ in 0..10 {
            assert_eq!(aggregate_random(&two, 7).unwrap(), first);
        }
        assert_eq!(aggregate_random(&[], 1), Err(ClusterError::Empty));
    }

    #[test]
    fn random_selection_is_uniform() {
        // 4 choices, 10^4 draws: mean 2500, sd = sqrt(10^4 * 0.25 * 0.75) ~ 43.3;
        // the 150 band is about 3.5 sd.
        let four = preds(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]);
        let mut counts = [0usize; 4];
        for seed in 0..10_000u64 {
            counts[aggregate_random(&four, seed).unwrap().x as usize] += 1;
        }
        for c in counts {
            assert!((2350..=2650).contains(&c), "{counts:?}");
        }
    }
}
