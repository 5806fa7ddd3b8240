//! Pairwise synchronization of one camera to a reference timeline, plus the
//! raw-timestamp and exhaustive-search baselines.

use super::mapping::FrameMapping;
use super::windows::{best_offset_class, window_count};
use super::{OffsetLabeling, SyncError};
use crate::adgc::{predict_window, GraphStructure, SyncModel};
use crate::icfp::DynamicGraph;
use ndarray::Array2;

/// Reference frame count implied by a graph: one past its last retained
/// frame index.
fn frame_span(graph: &DynamicGraph) -> usize {
    graph.valid_frames().last().map(|&f| f + 1).unwrap_or(0)
}

/// Turns per-window offset predictions into a total, monotone frame mapping.
///
/// Each source frame takes the offset of the window whose center is nearest
/// to it, then the reference targets are isotonically projected and rounded.
fn mapping_from_window_offsets(
    camera_id: u8,
    method: &str,
    offsets: &[i64],
    starts: &[usize],
    other: &DynamicGraph,
    reference_count: usize,
    window_len: usize,
) -> FrameMapping {
    let frames = frame_span(other);
    let valid = other.valid_frames();
    let targets: Vec<f64> = (0..frames)
        .map(|k| {
            // Nearest retained slot, then the window centered nearest to it.
            let slot = match valid.binary_search(&k) {
                Ok(s) => s,
                Err(i) if i == 0 => 0,
                Err(i) if i >= valid.len() => valid.len() - 1,
                Err(i) => {
                    if k - valid[i - 1] <= valid[i] - k {
                        i - 1
                    } else {
                        i
                    }
                }
            };
            let half = (window_len - 1) / 2;
            let w = slot.saturating_sub(half).min(starts.len() - 1);
            k as f64 + offsets[w] as f64
        })
        .collect();
    FrameMapping::from_targets(camera_id, method, &targets, reference_count)
}

/// Synchronizes `other` to the reference timeline with a trained model:
/// per-window offset-bin predictions (averaged global and local heads)
/// converted to per-frame assignments with isotonic monotonicity.
pub fn pairwise_sync(
    reference: &DynamicGraph,
    other: &DynamicGraph,
    model: &SyncModel,
    labeling: &OffsetLabeling,
) -> Result<FrameMapping, SyncError> {
    labeling.validate()?;
    if model.dims().classes != labeling.classes() {
        return Err(SyncError::MismatchedModel {
            model_classes: model.dims().classes,
            bins: labeling.classes(),
        });
    }
    let t = labeling.window_len;
    let slots = other.valid_frames().len();
    if slots < t || reference.valid_frames().len() < t {
        return Err(SyncError::InsufficientOverlap {
            available: slots.min(reference.valid_frames().len()),
            needed: t,
        });
    }
    let structure = GraphStructure::from_graph(other);
    let count = window_count(slots, t);
    let mut offsets = Vec::with_capacity(count);
    let mut starts = Vec::with_capacity(count);
    for w in 0..count {
        let coords: Vec<Array2<f64>> = (w..w + t)
            .map(|slot| {
                let cloud = other.positions_at_slot(slot);
                let mut c = Array2::zeros((cloud.len(), 3));
                for (i, p) in cloud.points().iter().enumerate() {
                    c[(i, 0)] = p.x;
                    c[(i, 1)] = p.y;
                    c[(i, 2)] = p.z;
                }
                c
            })
            .collect();
        let probs = predict_window(model, &structure, &coords)?;
        let class = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .expect("non-empty class list");
        offsets.push(labeling.offset_of(class));
        starts.push(w);
    }
    Ok(mapping_from_window_offsets(
        other.camera_id.unwrap_or(0),
        "learned",
        &offsets,
        &starts,
        other,
        frame_span(reference),
        t,
    ))
}

/// Baseline that assigns frames by their nominal index (trusting clocks).
pub fn raw_mapping(camera_id: u8, frame_count: usize, reference_count: usize) -> FrameMapping {
    FrameMapping {
        camera_id,
        method: "raw".into(),
        assignments: (0..frame_count)
            .map(|k| (k, k.min(reference_count.saturating_sub(1))))
            .collect(),
    }
}

/// Baseline that picks each window's offset by exhaustive symmetric-CPGD
/// minimization over the offset bins; the oracle counterpart of
/// [`pairwise_sync`] with the same output contract.
pub fn baseline_exhaustive(
    reference: &DynamicGraph,
    other: &DynamicGraph,
    labeling: &OffsetLabeling,
) -> Result<FrameMapping, SyncError> {
    labeling.validate()?;
    let t = labeling.window_len;
    let slots = other.valid_frames().len();
    if slots < t || reference.valid_frames().len() < t {
        return Err(SyncError::InsufficientOverlap {
            available: slots.min(reference.valid_frames().len()),
            needed: t,
        });
    }
    let count = window_count(slots, t);
    let mut offsets = Vec::with_capacity(count);
    let mut starts = Vec::with_capacity(count);
    for w in 0..count {
        let class = best_offset_class(reference, other, w, labeling)?;
        offsets.push(labeling.offset_of(class));
        starts.push(w);
    }
    Ok(mapping_from_window_offsets(
        other.camera_id.unwrap_or(0),
        "exhaustive",
        &offsets,
        &starts,
        other,
        frame_span(reference),
        t,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;

    fn sweep_graph(camera: u8, frames: usize, phase: i64) -> DynamicGraph {
        let valid: Vec<usize> = (0..frames).collect();
        let moving: Vec<Point3> = (0..frames)
            .map(|f| Point3::new((f as i64 + phase) as f64 * 5.0, 0.0, 0.0))
            .collect();
        let anchor: Vec<Point3> = (0..frames).map(|_| Point3::new(0.0, 40.0, 0.0)).collect();
        DynamicGraph::new(Some(camera), valid, vec![moving, anchor], vec![(0, 1)])
    }

    #[test]
    fn exhaustive_on_identical_sequences_is_identity() {
        let reference = sweep_graph(1, 14, 0);
        let other = sweep_graph(2, 14, 0);
        let labeling = OffsetLabeling { window_len: 6, offset_bins: (-3..=3).collect() };
        let mapping = baseline_exhaustive(&reference, &other, &labeling).unwrap();
        assert!(mapping.is_monotone_total(14));
        for &(src, reference) in &mapping.assignments {
            assert_eq!(src, reference);
        }
    }

    #[test]
    fn exhaustive_recovers_a_constant_shift() {
        // Every window prefers +3: the other camera's content at frame k
        // matches the reference at k + 3.
        let reference = sweep_graph(1, 20, 0);
        let other = sweep_graph(2, 20, 3);
        let labeling = OffsetLabeling { window_len: 6, offset_bins: (-3..=3).collect() };
        let mapping = baseline_exhaustive(&reference, &other, &labeling).unwrap();
        for &(src, reference) in &mapping.assignments {
            if src + 3 < 20 {
                assert_eq!(reference, src + 3, "frame {src}");
            }
        }
    }

    #[test]
    fn raw_mapping_is_identity_within_bounds() {
        let mapping = raw_mapping(3, 10, 8);
        assert!(mapping.is_monotone_total(10));
        assert_eq!(mapping.reference_of(4), Some(4));
        assert_eq!(mapping.reference_of(9), Some(7));
    }

    #[test]
    fn random_model_still_yields_monotone_total_mapping() {
        use crate::adgc::{ModelDims, SyncModel};
        let reference = sweep_graph(1, 16, 0);
        let other = sweep_graph(2, 16, 1);
        let labeling = OffsetLabeling { window_len: 5, offset_bins: (-2..=2).collect() };
        let model = SyncModel::init(ModelDims::with_widths(5, 6, 6), 99);
        let mapping = pairwise_sync(&reference, &other, &model, &labeling).unwrap();
        assert!(mapping.is_monotone_total(16));
    }

    #[test]
    fn model_class_count_must_match_bins() {
        use crate::adgc::{ModelDims, SyncModel};
        let reference = sweep_graph(1, 16, 0);
        let other = sweep_graph(2, 16, 0);
        let labeling = OffsetLabeling { window_len: 5, offset_bins: (-2..=2).collect() };
        let model = SyncModel::init(ModelDims::with_widths(7, 6, 6), 1);
        assert!(matches!(
            pairwise_sync(&reference, &other, &model, &labeling),
            Err(SyncError::MismatchedModel { model_classes: 7, bins: 5 })
        ));
    }
}
