use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::GroundingSample;
use super::{sample_seed, worker_pool, HarnessError};
use crate::backend::{DecodeParams, GroundingBackend};
use crate::config::MvpConfig;
use crate::geometry::{point_in_rect, Point};
use crate::pipeline::{run_mvp, Aggregation, MvpInput, MvpResult, RunOptions, ViewStrategy};
use crate::views::containing_ratio;

/// Pipeline variant under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Mvp,
    /// One inference on the full screenshot.
    Single,
    /// Mean of all predictions instead of clustering.
    AvgAblation,
    /// One prediction picked at random instead of clustering.
    RandomAblation,
    /// Attention crops sent at native resolution (alpha = 1).
    NoResizeAblation,
    /// Border-padded copies instead of attention crops.
    BorderPadAblation,
}

impl EvalMode {
    pub const ALL: [EvalMode; 6] = [
        EvalMode::Mvp,
        EvalMode::Single,
        EvalMode::AvgAblation,
        EvalMode::RandomAblation,
        EvalMode::NoResizeAblation,
        EvalMode::BorderPadAblation,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EvalMode::Mvp => "mvp",
            EvalMode::Single => "single",
            EvalMode::AvgAblation => "avg",
            EvalMode::RandomAblation => "random",
            EvalMode::NoResizeAblation => "no_resize",
            EvalMode::BorderPadAblation => "border_pad",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| {
            m.as_str() == s || serde_json::to_value(m).ok().and_then(|v| v.as_str().map(|v| v == s)) == Some(true)
        })
    }

    /// Effective config and run options for one sample.
    pub fn plan(&self, cfg: &MvpConfig, seed: u64, sample_id: &str) -> (MvpConfig, RunOptions) {
        let mut cfg = cfg.clone();
        let mut opts = RunOptions::default();
        match self {
            EvalMode::Mvp => {}
            EvalMode::Single => cfg.m = 0,
            EvalMode::AvgAblation => opts.aggregation = Aggregation::Average,
            EvalMode::RandomAblation => {
                opts.aggregation = Aggregation::Random { seed: sample_seed(seed, sample_id) }
            }
            EvalMode::NoResizeAblation => cfg.alpha = 1.0,
            EvalMode::BorderPadAblation => opts.views = ViewStrategy::BorderPad,
        }
        (cfg, opts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub cfg: MvpConfig,
    pub seed: u64,
    pub workers: usize,
    pub params: DecodeParams,
    /// Free-form description of the backend, embedded in reports.
    pub backend: serde_json::Value,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            cfg: MvpConfig::default(),
            seed: 0,
            workers: 4,
            params: DecodeParams::default(),
            backend: serde_json::Value::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    #[serde(rename = "final")]
    pub final_point: Option<Point>,
    pub hit: bool,
    pub n_views: usize,
    pub cluster_sizes: Vec<usize>,
    /// Whether any extra view fully contains the target; `None` without extra views.
    pub contains_target: Option<bool>,
    /// Hit flag of each surviving prediction, in clustering order.
    pub prediction_hits: Vec<bool>,
    pub failures: Vec<String>,
    pub tags: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TagStat {
    pub n: usize,
    pub hits: usize,
    pub accuracy: f64,
}

impl TagStat {
    fn add(&mut self, hit: bool) {
        self.n += 1;
        self.hits += hit as usize;
        self.accuracy = self.hits as f64 / self.n as f64;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub n: usize,
    pub hits: usize,
    pub accuracy: f64,
    /// Keyed by `tag=value`.
    pub per_tag: BTreeMap<String, TagStat>,
    pub containing_ratio: Option<f64>,
}

impl Aggregates {
    pub fn from_records(records: &[SampleRecord]) -> Self {
        let mut overall = TagStat::default();
        let mut per_tag: BTreeMap<String, TagStat> = BTreeMap::new();
        for r in records {
            overall.add(r.hit);
            for (k, v) in &r.tags {
                per_tag.entry(format!("{k}={v}")).or_default().add(r.hit);
            }
        }
        let contained: Vec<bool> = records.iter().filter_map(|r| r.contains_target).collect();
        let containing_ratio = (!contained.is_empty())
            .then(|| contained.iter().filter(|&&c| c).count() as f64 / contained.len() as f64);
        Self { n: overall.n, hits: overall.hits, accuracy: overall.accuracy, per_tag, containing_ratio }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub seed: u64,
    pub config: MvpConfig,
    pub backend: serde_json::Value,
    pub records: Vec<SampleRecord>,
    pub aggregates: Aggregates,
}

fn record_from(sample: &GroundingSample, result: Result<MvpResult, String>) -> SampleRecord {
    let tags = sample.tags.clone();
    match result {
        Ok(r) => {
            let proposed: Vec<_> = r.proposed_views().copied().collect();
            SampleRecord {
                id: sample.id.clone(),
                final_point: Some(r.final_point),
                hit: point_in_rect(&r.final_point, &sample.gt_bbox),
                n_views: proposed.len(),
                cluster_sizes: r.clusters.clusters.iter().map(|c| c.len()).collect(),
                contains_target: (!proposed.is_empty())
                    .then(|| containing_ratio(&proposed, &sample.gt_bbox) == 1.0),
                prediction_hits: r
                    .predictions
                    .iter()
                    .map(|p| point_in_rect(&p.point_full, &sample.gt_bbox))
                    .collect(),
                failures: r.failures.iter().map(|f| format!("view {}: {}", f.view_id, f.error)).collect(),
                tags,
            }
        }
        Err(e) => SampleRecord {
            id: sample.id.clone(),
            final_point: None,
            hit: false,
            n_views: 0,
            cluster_sizes: Vec::new(),
            contains_target: None,
            prediction_hits: Vec::new(),
            failures: vec![e],
            tags,
        },
    }
}

pub fn run_sample<B: GroundingBackend + ?Sized>(
    backend: &B,
    sample: &GroundingSample,
    settings: &EvalSettings,
    mode: EvalMode,
) -> Result<MvpResult, String> {
    let shot = sample.screenshot().map_err(|e| e.to_string())?;
    let (cfg, opts) = mode.plan(&settings.cfg, settings.seed, &sample.id);
    let input = MvpInput {
        screenshot: &shot,
        instruction: &sample.instruction,
        target: Some(sample.gt_bbox),
        params: &settings.params,
    };
    run_mvp(backend, &input, &cfg, opts).map_err(|e| e.to_string())
}

/// Runs `mode` over every sample. Samples are spread over `settings.workers`
/// threads; records come back in dataset order and do not depend on the
/// worker count.
pub fn evaluate<B: GroundingBackend + ?Sized>(
    samples: &[GroundingSample],
    backend: &B,
    settings: &EvalSettings,
    mode: EvalMode,
) -> Result<EvalReport, HarnessError> {
    settings.cfg.validate().map_err(|e| HarnessError::Settings(e.to_string()))?;
    let pool = worker_pool(settings.workers)?;
    let records: Vec<SampleRecord> = pool.install(|| {
        samples
            .par_iter()
            .map(|s| record_from(s, run_sample(backend, s, settings, mode)))
            .collect()
    });
    let aggregates = Aggregates::from_records(&records);
    Ok(EvalReport {
        mode,
        seed: settings.seed,
        config: settings.cfg.clone(),
        backend: settings.backend.clone(),
        records,
        aggregates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassAtN {
    pub n: usize,
    pub passed: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassAtNReport {
    pub table: Vec<PassAtN>,
    /// The single run with the most views that every row is computed from.
    pub run: EvalReport,
}

/// Fraction of samples where one of the first N predictions (original
/// first, then views by rank) hits the target, for each N. All rows come
/// from one run with `N_max - 1` extra views.
pub fn pass_at_n<B: GroundingBackend + ?Sized>(
    samples: &[GroundingSample],
    backend: &B,
    settings: &EvalSettings,
    n_values: &[usize],
) -> Result<PassAtNReport, HarnessError> {
    if n_values.is_empty() || n_values[0] == 0 || n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HarnessError::Settings(format!(
            "pass@N needs strictly ascending positive N values, got {n_values:?}"
        )));
    }
    let n_max = *n_values.last().unwrap();
    let mut superset = settings.clone();
    superset.cfg.m = n_max - 1;
    superset.cfg.k = superset.cfg.k.max(superset.cfg.m);
    let run = evaluate(samples, backend, &superset, EvalMode::Mvp)?;
    let table = n_values
        .iter()
        .map(|&n| {
            let passed = run
                .records
                .iter()
                .filter(|r| r.prediction_hits.iter().take(n).any(|&h| h))
                .count();
            PassAtN { n, passed, rate: passed as f64 / run.records.len().max(1) as f64 }
        })
        .collect();
    Ok(PassAtNReport { table, run })
}
