//! Camera synchronization: training-window construction, pairwise and
//! hierarchical alignment to the reference camera's timeline, merging, the
//! raw and exhaustive baselines, and the leave-one-camera-out evaluation.

mod eval;
mod hierarchy;
mod mapping;
mod merge;
mod pairwise;
mod windows;

pub use eval::{kfold_cpgd_eval, write_metrics, EvalReport, MethodEval};
pub use hierarchy::{hierarchical_sync, merge_graphs, HierarchicalOutcome, StageTrainer};
pub use mapping::{
    isotonic_non_decreasing, read_frame_mapping, write_frame_mapping, FrameMapping,
};
pub use merge::{merge_at_timestamp, select_sources, MergedFrame};
pub use pairwise::{baseline_exhaustive, pairwise_sync, raw_mapping};
pub use windows::{make_training_windows, window_count, WindowSet};

use thiserror::Error;

use crate::adgc::AdgcError;
use crate::geometry::GeometryError;
use crate::icfp::IcfpError;

#[derive(Debug, Error)]
pub enum SyncError {
    #[error("insufficient overlap: {available} shared frames, window needs {needed}")]
    InsufficientOverlap { available: usize, needed: usize },
    #[error("model predicts {model_classes} classes but the labeling has {bins} bins")]
    MismatchedModel { model_classes: usize, bins: usize },
    #[error("offset bins must contain 0 and have odd length, got {0:?}")]
    BadBins(Vec<i64>),
    #[error("reference timestamp {requested} outside mapping coverage")]
    OutsideCoverage { requested: usize },
    #[error("synchronization of camera {camera} failed: {source}")]
    StageFailed { camera: u8, #[source] source: Box<SyncError> },
    #[error("mapping file line {line}: {detail}")]
    MappingFormat { line: usize, detail: String },
    #[error("unsupported framemap version {found}")]
    MappingVersion { found: String },
    #[error(transparent)]
    Adgc(#[from] AdgcError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Icfp(#[from] IcfpError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Class-label semantics: each class is an integer frame offset to the
/// reference timeline. The bin list must be odd-sized and contain zero so a
/// "no offset" class exists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OffsetLabeling {
    pub window_len: usize,
    pub offset_bins: Vec<i64>,
}

impl Default for OffsetLabeling {
    fn default() -> Self {
        Self { window_len: 40, offset_bins: (-3..=3).collect() }
    }
}

impl OffsetLabeling {
    pub fn validate(&self) -> Result<(), SyncError> {
        if self.offset_bins.len() % 2 == 0 || !self.offset_bins.contains(&0) {
            return Err(SyncError::BadBins(self.offset_bins.clone()));
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.offset_bins.len()
    }

    /// Class index of an offset, clamped to the nearest bin.
    pub fn class_of(&self, offset: i64) -> usize {
        let mut best = (i64::MAX, 0usize);
        for (i, &b) in self.offset_bins.iter().enumerate() {
            let d = (b - offset).abs();
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    pub fn offset_of(&self, class: usize) -> i64 {
        self.offset_bins[class]
    }
}
