//! End-to-end multi-view prediction for one screenshot.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attention::{mean_heads, AttentionError};
use crate::backend::{ground, AttentionCall, BackendError, DecodeParams, GroundingBackend, GroundingCall, Screenshot};
use crate::clustering::{aggregate_average, aggregate_random, cluster_points, decide, ClusterError, ClusterSet, Prediction};
use crate::config::{ConfigError, LowResStrategy, MvpConfig};
use crate::geometry::{view_to_full, Point, Rect};
use crate::views::{border_pad_views, propose_views, ProposalError, View};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error("attention request failed: {0}")]
    Attention(BackendError),
    #[error("bad attention rows: {0}")]
    AttentionRows(#[from] AttentionError),
    #[error("view proposal failed: {0}")]
    Proposal(#[from] ProposalError),
    #[error("all {0} backend calls failed")]
    AllBackendCallsFailed(usize),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

/// Where extra views come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewStrategy {
    /// Attention crops, or border padding below the low-resolution threshold.
    #[default]
    Auto,
    /// Border padding regardless of resolution.
    BorderPad,
}

/// How the surviving predictions become one point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Cluster,
    Average,
    Random { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunOptions {
    pub views: ViewStrategy,
    pub aggregation: Aggregation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewFailure {
    pub view_id: usize,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub attention_ms: f64,
    pub proposal_ms: f64,
    pub grounding_ms: f64,
    pub aggregation_ms: f64,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvpResult {
    #[serde(rename = "final")]
    pub final_point: Point,
    /// Surviving predictions in clustering order: original first, then
    /// views by descending rank.
    pub predictions: Vec<Prediction>,
    /// Every view that was queried, original included.
    pub views: Vec<View>,
    pub clusters: ClusterSet,
    /// Index of the winning cluster when aggregating by clustering.
    pub chosen_cluster: Option<usize>,
    pub aggregation: Aggregation,
    pub failures: Vec<ViewFailure>,
    /// Set when attention could not be fetched and border padding was used instead.
    pub attention_fallback: Option<String>,
    pub timings: StageTimings,
}

impl MvpResult {
    /// Equality ignoring wall-clock timings.
    pub fn same_outcome(&self, other: &MvpResult) -> bool {
        let strip = |r: &MvpResult| MvpResult { timings: StageTimings::default(), ..r.clone() };
        strip(self) == strip(other)
    }

    /// The extra views (everything except the original).
    pub fn proposed_views(&self) -> impl Iterator<Item = &View> {
        self.views.iter().filter(|v| !v.is_original())
    }
}

pub struct MvpInput<'a> {
    pub screenshot: &'a Screenshot,
    pub instruction: &'a str,
    /// Only passed through to simulated backends.
    pub target: Option<Rect>,
    pub params: &'a DecodeParams,
}

/// Original first, then by descending rank, then by id.
fn canonical_order(views: &mut [View]) {
    views.sort_by(|a, b| {
        b.is_original()
            .cmp(&a.is_original())
            .then(b.rank.cmp(&a.rank))
            .then(a.id.cmp(&b.id))
    });
}

fn select_views<B: GroundingBackend + ?Sized>(
    backend: &B,
    input: &MvpInput<'_>,
    cfg: &MvpConfig,
    strategy: ViewStrategy,
    timings: &mut StageTimings,
) -> Result<(Vec<View>, Option<String>), PipelineError> {
    let dims = input.screenshot.dims();
    if cfg.m == 0 {
        return Ok((Vec::new(), None));
    }
    let pad = |m: usize| border_pad_views(dims, cfg).into_iter().take(m).collect::<Vec<_>>();
    let low_res = dims.min_side() < cfg.lowres_threshold;
    if strategy == ViewStrategy::BorderPad || (low_res && cfg.lowres_strategy == LowResStrategy::BorderPad) {
        return Ok((pad(cfg.m), None));
    }

    let start = Instant::now();
    let raw = backend.attention(&AttentionCall {
        screenshot: input.screenshot,
        instruction: input.instruction,
        layer: cfg.attn_layer,
        query_mode: cfg.query_mode,
        target: input.target,
    });
    timings.attention_ms = ms(start.elapsed());
    let raw = match raw {
        Ok(raw) => raw,
        Err(BackendError::AttentionUnavailable(msg)) => {
            log::warn!("attention unavailable ({msg}); using border-padded views");
            return Ok((pad(cfg.m), Some(msg)));
        }
        Err(e) => return Err(PipelineError::Attention(e)),
    };

    let start = Instant::now();
    let scores = mean_heads(&raw)?;
    let views = propose_views(&scores, dims, cfg)?;
    timings.proposal_ms = ms(start.elapsed());
    Ok((views, None))
}

/// Runs `f` over `items` with at most `limit` in flight; results come back in input order.
fn fan_out<T: Send + Sync, R: Send>(items: &[T], limit: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = limit.min(items.len());
    if workers <= 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().unwrap().expect("every slot filled")).collect()
}

pub fn run_mvp<B: GroundingBackend + ?Sized>(
    backend: &B,
    input: &MvpInput<'_>,
    cfg: &MvpConfig,
    opts: RunOptions,
) -> Result<MvpResult, PipelineError> {
    cfg.validate()?;
    let mut timings = StageTimings::default();
    let (proposed, attention_fallback) = select_views(backend, input, cfg, opts.views, &mut timings)?;

    let mut views = Vec::with_capacity(proposed.len() + 1);
    views.push(View::original(input.screenshot.dims()));
    views.extend(proposed);
    canonical_order(&mut views);

    let start = Instant::now();
    let outcomes = fan_out(&views, cfg.max_in_flight, |view| {
        let call = GroundingCall {
            screenshot: input.screenshot,
            instruction: input.instruction,
            view,
            target: input.target,
            call_idx: 0,
            params: input.params,
        };
        let out = ground(backend, &call)?;
        let full = view_to_full(&out.parsed, view).map_err(|e| BackendError::Protocol(e.to_string()))?;
        Ok::<_, BackendError>(Prediction {
            view_id: view.id,
            point_view: out.parsed,
            point_full: full,
            raw_text: out.raw_text,
        })
    });
    timings.grounding_ms = ms(start.elapsed());

    let mut predictions = Vec::with_capacity(views.len());
    let mut failures = Vec::new();
    for (view, outcome) in views.iter().zip(outcomes) {
        match outcome {
            Ok(p) => predictions.push(p),
            Err(e) => {
                log::debug!("view {} failed: {e}", view.id);
                failures.push(ViewFailure { view_id: view.id, error: e.to_string() });
            }
        }
    }
    if predictions.is_empty() {
        return Err(PipelineError::AllBackendCallsFailed(views.len()));
    }

    let start = Instant::now();
    let clusters = cluster_points(&predictions, cfg.tau)?;
    let (final_point, chosen_cluster) = match opts.aggregation {
        Aggregation::Cluster => {
            let d = decide(&clusters, &predictions, &views)?;
            (d.point, Some(d.cluster))
        }
        Aggregation::Average => (aggregate_average(&predictions)?, None),
        Aggregation::Random { seed } => (aggregate_random(&predictions, seed)?, None),
    };
    timings.aggregation_ms = ms(start.elapsed());

    Ok(MvpResult {
        final_point,
        predictions,
        views,
        clusters,
        chosen_cluster,
        aggregation: opts.aggregation,
        failures,
        attention_fallback,
        timings,
    })
}
