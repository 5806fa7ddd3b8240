//! Merging mapped frames into per-reference-timestamp clouds.

use super::mapping::FrameMapping;
use super::SyncError;
use crate::geometry::{Frame, PointCloud};

/// One merged reference timestamp: the concatenated cloud and, per
/// contributing camera, the source frame that was used.
#[derive(Debug, Clone)]
pub struct MergedFrame {
    pub reference_index: usize,
    pub cloud: PointCloud,
    /// (camera position in the input order, source frame index).
    pub contributors: Vec<(usize, usize)>,
}

/// For each camera, the source frame assigned to `reference_index`: the one
/// nearest to the reference index when several map there, `None` when the
/// camera does not cover it.
pub fn select_sources(mappings: &[FrameMapping], reference_index: usize) -> Vec<Option<usize>> {
    mappings
        .iter()
        .map(|mapping| {
            let mut best: Option<usize> = None;
            for &(src, reference) in &mapping.assignments {
                if reference == reference_index {
                    let better = match best {
                        None => true,
                        Some(b) => {
                            src.abs_diff(reference_index) < b.abs_diff(reference_index)
                                || (src.abs_diff(reference_index) == b.abs_diff(reference_index)
                                    && src < b)
                        }
                    };
                    if better {
                        best = Some(src);
                    }
                }
            }
            best
        })
        .collect()
}

/// Concatenates the mapped frames of every covering camera at one reference
/// timestamp. Cameras share a world frame, so merging is plain
/// concatenation. Errors when no camera covers the timestamp.
pub fn merge_at_timestamp(
    frames: &[Vec<Frame>],
    mappings: &[FrameMapping],
    reference_index: usize,
) -> Result<MergedFrame, SyncError> {
    assert_eq!(frames.len(), mappings.len(), "one mapping per camera");
    let sources = select_sources(mappings, reference_index);
    let mut contributors = Vec::new();
    let mut clouds: Vec<&PointCloud> = Vec::new();
    for (cam, source) in sources.iter().enumerate() {
        if let Some(src) = source {
            if let Some(frame) = frames[cam].get(*src) {
                contributors.push((cam, *src));
                clouds.push(&frame.cloud);
            }
        }
    }
    if clouds.is_empty() {
        return Err(SyncError::OutsideCoverage { requested: reference_index });
    }
    Ok(MergedFrame {
        reference_index,
        cloud: PointCloud::concat(&clouds),
        contributors,
    })
}
