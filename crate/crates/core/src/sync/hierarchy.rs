//! Hierarchical synchronization: fold cameras one at a time onto a growing
//! reference timeline (camera 12, camera 123, ...).

use super::mapping::FrameMapping;
use super::pairwise::pairwise_sync;
use super::{OffsetLabeling, SyncError};
use crate::adgc::SyncModel;
use crate::geometry::Point3;
use crate::icfp::DynamicGraph;

/// Trains (or supplies) the model for one stage: reference graph, camera
/// graph, labeling, and the stage index (1 synchronizes the second camera).
pub type StageTrainer<'a> =
    dyn FnMut(&DynamicGraph, &DynamicGraph, &OffsetLabeling, usize) -> Result<SyncModel, SyncError>
        + 'a;

pub struct HierarchicalOutcome {
    /// One mapping per non-reference camera, in input order.
    pub mappings: Vec<FrameMapping>,
    /// Union of all cameras' nodes on the reference timeline.
    pub merged: DynamicGraph,
}

/// Merges a synchronized camera's nodes into the reference graph: the other
/// graph's trajectories are re-timed through the mapping (nearest assigned
/// source frame per reference frame) and appended as new nodes.
pub fn merge_graphs(
    reference: &DynamicGraph,
    other: &DynamicGraph,
    mapping: &FrameMapping,
) -> DynamicGraph {
    let ref_frames = reference.valid_frames().to_vec();

    // Inverse assignment: for each reference frame, the nearest source frame
    // among those mapped to it, falling back to the closest covered
    // reference frame.
    let mut by_reference: std::collections::BTreeMap<usize, usize> = std::collections::BTreeMap::new();
    for &(src, reference_idx) in &mapping.assignments {
        by_reference
            .entry(reference_idx)
            .and_modify(|existing| {
                let better = (src as i64 - reference_idx as i64).abs()
                    < (*existing as i64 - reference_idx as i64).abs();
                if better {
                    *existing = src;
                }
            })
            .or_insert(src);
    }
    let source_for = |r: usize| -> usize {
        if let Some(&src) = by_reference.get(&r) {
            return src;
        }
        let mut best: Option<(usize, usize)> = None;
        for (&covered, &src) in &by_reference {
            let d = covered.abs_diff(r);
            if best.map(|(bd, _)| d < bd).unwrap_or(true) {
                best = Some((d, src));
            }
        }
        best.map(|(_, src)| src).unwrap_or(0)
    };

    let other_position = |node: usize, src_frame: usize| -> Point3 {
        let valid = other.valid_frames();
        let slot = match valid.binary_search(&src_frame) {
            Ok(s) => s,
            Err(i) if i == 0 => 0,
            Err(i) if i >= valid.len() => valid.len() - 1,
            Err(i) => {
                if src_frame - valid[i - 1] <= valid[i] - src_frame {
                    i - 1
                } else {
                    i
                }
            }
        };
        other.trajectories()[node][slot]
    };

    let mut trajectories = reference.trajectories().to_vec();
    for node in 0..other.node_count() {
        let t: Vec<Point3> =
            ref_frames.iter().map(|&r| other_position(node, source_for(r))).collect();
        trajectories.push(t);
    }

    let offset = reference.node_count();
    let mut edges = reference.edges().to_vec();
    edges.extend(other.edges().iter().map(|&(a, b)| (a + offset, b + offset)));

    DynamicGraph::new(None, ref_frames, trajectories, edges)
}

/// Folds the cameras onto the first graph's timeline in input order: each
/// stage trains on the current merged reference, synchronizes the next
/// camera, and absorbs it into the reference. A failing stage aborts with
/// the camera identified.
pub fn hierarchical_sync(
    graphs: &[DynamicGraph],
    labeling: &OffsetLabeling,
    trainer: &mut StageTrainer<'_>,
) -> Result<HierarchicalOutcome, SyncError> {
    assert!(graphs.len() >= 2, "hierarchical sync needs at least two cameras");
    let mut merged = graphs[0].clone();
    let mut mappings = Vec::with_capacity(graphs.len() - 1);
    for (stage, other) in graphs.iter().enumerate().skip(1) {
        let camera = other.camera_id.unwrap_or(stage as u8);
        let wrap = |source: SyncError| SyncError::StageFailed { camera, source: Box::new(source) };
        let model = trainer(&merged, other, labeling, stage).map_err(wrap)?;
        let mapping = pairwise_sync(&merged, other, &model, labeling).map_err(wrap)?;
        merged = merge_graphs(&merged, other, &mapping);
        mappings.push(mapping);
    }
    Ok(HierarchicalOutcome { mappings, merged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adgc::{train, ModelDims, TrainConfig};
    use crate::sync::windows::make_training_windows;

    fn sweep_graph(camera: u8, frames: usize, phase: i64) -> DynamicGraph {
        let valid: Vec<usize> = (0..frames).collect();
        let moving: Vec<Point3> = (0..frames)
            .map(|f| Point3::new((f as i64 + phase) as f64 * 5.0, 0.0, 0.0))
            .collect();
        let anchor: Vec<Point3> = (0..frames).map(|_| Point3::new(0.0, 40.0, 0.0)).collect();
        DynamicGraph::new(Some(camera), valid, vec![moving, anchor], vec![(0, 1)])
    }

    fn tiny_trainer(
    ) -> impl FnMut(&DynamicGraph, &DynamicGraph, &OffsetLabeling, usize) -> Result<SyncModel, SyncError>
    {
        |reference: &DynamicGraph, other: &DynamicGraph, labeling: &OffsetLabeling, stage: usize| {
            let set = make_training_windows(reference, other, labeling, None)?;
            let config = TrainConfig {
                window_len: labeling.window_len,
                epochs: 40,
                learning_rate: 0.02,
                lr_decay_epochs: 100,
                seed: stage as u64,
                ..TrainConfig::default()
            };
            let dims = ModelDims::with_widths(labeling.classes(), 6, 6);
            let (model, _) = train(&set.windows, &set.structure, dims, &config)?;
            Ok(model)
        }
    }

    #[test]
    fn two_cameras_reduce_to_pairwise() {
        let graphs = vec![sweep_graph(1, 14, 0), sweep_graph(2, 14, 0)];
        let labeling = OffsetLabeling { window_len: 5, offset_bins: (-2..=2).collect() };
        let mut trainer = tiny_trainer();
        let outcome = hierarchical_sync(&graphs, &labeling, &mut trainer).unwrap();
        assert_eq!(outcome.mappings.len(), 1);
        let model = tiny_trainer()(&graphs[0], &graphs[1], &labeling, 1).unwrap();
        let direct = pairwise_sync(&graphs[0], &graphs[1], &model, &labeling).unwrap();
        assert_eq!(outcome.mappings[0].assignments, direct.assignments);
        assert_eq!(outcome.merged.node_count(), 4);
    }

    #[test]
    fn drift_free_cameras_map_to_identity() {
        let graphs: Vec<DynamicGraph> =
            (1..=4).map(|c| sweep_graph(c, 14, 0)).collect();
        let labeling = OffsetLabeling { window_len: 5, offset_bins: (-2..=2).collect() };
        let mut trainer = tiny_trainer();
        let outcome = hierarchical_sync(&graphs, &labeling, &mut trainer).unwrap();
        for mapping in &outcome.mappings {
            assert!(mapping.is_monotone_total(14));
            for &(src, reference) in &mapping.assignments {
                assert_eq!(src, reference, "camera {}", mapping.camera_id);
            }
        }
        assert_eq!(outcome.merged.node_count(), 8);
        assert_eq!(outcome.merged.valid_frames(), graphs[0].valid_frames());
    }

    #[test]
    fn merge_retimes_the_other_camera() {
        let reference = sweep_graph(1, 10, 0);
        let other = sweep_graph(2, 10, 2);
        // A mapping that shifts by +2: source k aligns with reference k + 2.
        let mapping = FrameMapping {
            camera_id: 2,
            method: "test".into(),
            assignments: (0..10).map(|k| (k, (k + 2).min(9))).collect(),
        };
        let merged = merge_graphs(&reference, &other, &mapping);
        assert_eq!(merged.node_count(), 4);
        // The other camera's moving node, re-timed onto reference frame r,
        // shows its position at source frame r - 2, which equals the
        // reference camera's position at frame r. Frame 9 absorbs the
        // clamped tail sources, so it is excluded.
        for (slot, &r) in merged.valid_frames().iter().enumerate() {
            if (2..=8).contains(&r) {
                let ref_pos = merged.trajectories()[0][slot];
                let other_pos = merged.trajectories()[2][slot];
                assert!((ref_pos.x - other_pos.x).abs() < 1e-12, "frame {r}");
            }
        }
    }
}
