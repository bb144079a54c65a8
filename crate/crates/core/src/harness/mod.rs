//! Benchmark evaluation: accuracy under each pipeline variant, pass@N,
//! the border-perturbation study, and report emission.

pub mod dataset;
pub mod eval;
pub mod perturb;
pub mod report;
pub mod synth;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use dataset::{load_dataset, load_screenspot_pro, write_dataset, Dataset, GroundingSample, Reject};
pub use eval::{evaluate, pass_at_n, EvalMode, EvalReport, EvalSettings, PassAtN, SampleRecord};
pub use perturb::{perturbation_study, PerturbationReport, PerturbationSettings};
pub use report::{emit_report, ReportFormat};
pub use synth::{synthesize, SynthSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("{}: no usable samples ({rejects} rejected)", path.display())]
    EmptyDataset { path: PathBuf, rejects: usize },
    #[error("sample {id}: {message}")]
    Image { id: String, message: String },
    #[error("invalid settings: {0}")]
    Settings(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }
}

/// Per-sample seed derived from a run seed and the sample id (FNV-1a over
/// the id, mixed with the seed by SplitMix64).
pub fn sample_seed(seed: u64, id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn worker_pool(workers: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Settings(e.to_string()))
}
