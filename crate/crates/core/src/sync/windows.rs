//! Training windows over a camera's dynamic graph: features are per-step
//! node coordinates, labels are offset bins from simulator truth or from an
//! exhaustive CPGD search against the reference graph.

use ndarray::Array2;

use super::{OffsetLabeling, SyncError};
use crate::adgc::{GraphStructure, TrainingWindow};
use crate::geometry::{cpgd_sym, PointCloud};
use crate::icfp::DynamicGraph;

/// Labeled windows plus the graph structure the classifier runs on.
pub struct WindowSet {
    pub windows: Vec<TrainingWindow>,
    pub structure: GraphStructure,
    /// Window start slots into the other graph's retained frames.
    pub starts: Vec<usize>,
}

/// Sliding windows (stride 1) over `slots` retained frames.
pub fn window_count(slots: usize, window_len: usize) -> usize {
    slots.saturating_sub(window_len).saturating_add(if slots >= window_len { 1 } else { 0 })
}

/// Node positions of `graph` at the retained frame nearest to `frame_index`
/// (exact when retained).
pub(crate) fn positions_near_frame(graph: &DynamicGraph, frame_index: i64) -> PointCloud {
    let frames = graph.valid_frames();
    let slot = match frames.binary_search(&(frame_index.max(0) as usize)) {
        Ok(s) => s,
        Err(insertion) => {
            // Nearest retained neighbor, earlier on ties.
            if insertion == 0 {
                0
            } else if insertion >= frames.len() {
                frames.len() - 1
            } else {
                let before = frames[insertion - 1] as i64;
                let after = frames[insertion] as i64;
                if (frame_index - before) <= (after - frame_index) {
                    insertion - 1
                } else {
                    insertion
                }
            }
        }
    };
    graph.positions_at_slot(slot)
}

fn coords_at_slot(graph: &DynamicGraph, slot: usize) -> Array2<f64> {
    let n = graph.node_count();
    let mut coords = Array2::zeros((n, 3));
    for (i, t) in graph.trajectories().iter().enumerate() {
        let p = t[slot];
        coords[(i, 0)] = p.x;
        coords[(i, 1)] = p.y;
        coords[(i, 2)] = p.z;
    }
    coords
}

/// Mean symmetric CPGD between the window's node positions shifted by
/// `offset` and the reference graph's node positions at the corresponding
/// frames.
pub(crate) fn window_alignment_cost(
    reference: &DynamicGraph,
    other: &DynamicGraph,
    start_slot: usize,
    window_len: usize,
    offset: i64,
) -> Result<f64, SyncError> {
    let mut total = 0.0;
    for slot in start_slot..start_slot + window_len {
        let frame = other.valid_frames()[slot] as i64;
        let other_cloud = other.positions_at_slot(slot);
        let ref_cloud = positions_near_frame(reference, frame + offset);
        total += cpgd_sym(&other_cloud, &ref_cloud)?;
    }
    Ok(total / window_len as f64)
}

/// The offset bin minimizing the window alignment cost; ties take the
/// smaller absolute offset, then the smaller offset.
pub(crate) fn best_offset_class(
    reference: &DynamicGraph,
    other: &DynamicGraph,
    start_slot: usize,
    labeling: &OffsetLabeling,
) -> Result<usize, SyncError> {
    let mut best: Option<(f64, i64, usize)> = None;
    for (class, &offset) in labeling.offset_bins.iter().enumerate() {
        let cost =
            window_alignment_cost(reference, other, start_slot, labeling.window_len, offset)?;
        let better = match &best {
            None => true,
            Some((c, o, _)) => {
                cost < *c
                    || (cost == *c
                        && (offset.abs() < o.abs() || (offset.abs() == o.abs() && offset < *o)))
            }
        };
        if better {
            best = Some((cost, offset, class));
        }
    }
    Ok(best.expect("bins are non-empty").2)
}

/// Builds labeled training windows from `other`'s trajectories.
///
/// With `truth` (per-frame offsets of the other camera, indexed by frame),
/// each window's label is the truth offset at its center frame. Without it,
/// the label comes from the exhaustive CPGD search over the offset bins.
pub fn make_training_windows(
    reference: &DynamicGraph,
    other: &DynamicGraph,
    labeling: &OffsetLabeling,
    truth: Option<&[i64]>,
) -> Result<WindowSet, SyncError> {
    labeling.validate()?;
    let t = labeling.window_len;
    let other_slots = other.valid_frames().len();
    let ref_slots = reference.valid_frames().len();
    if other_slots < t || ref_slots < t {
        return Err(SyncError::InsufficientOverlap {
            available: other_slots.min(ref_slots),
            needed: t,
        });
    }

    let structure = GraphStructure::from_graph(other);
    let count = window_count(other_slots, t);
    let mut windows = Vec::with_capacity(count);
    let mut starts = Vec::with_capacity(count);
    for w in 0..count {
        let coords: Vec<Array2<f64>> =
            (w..w + t).map(|slot| coords_at_slot(other, slot)).collect();
        let label = match truth {
            Some(offsets) => {
                let center_frame = other.valid_frames()[w + t / 2];
                let offset = offsets.get(center_frame).copied().unwrap_or(0);
                labeling.class_of(offset)
            }
            None => best_offset_class(reference, other, w, labeling)?,
        };
        windows.push(TrainingWindow { coords, label });
        starts.push(w);
    }
    Ok(WindowSet { windows, structure, starts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;

    /// A graph whose single feature is a point sweeping along x one
    /// millimeter per frame, with a second static node for geometry.
    fn sweep_graph(frames: usize, phase: i64) -> DynamicGraph {
        let valid: Vec<usize> = (0..frames).collect();
        let moving: Vec<Point3> = (0..frames)
            .map(|f| Point3::new((f as i64 + phase) as f64 * 1.0, 0.0, 0.0))
            .collect();
        let anchor: Vec<Point3> = (0..frames).map(|_| Point3::new(0.0, 50.0, 0.0)).collect();
        DynamicGraph::new(Some(1), valid, vec![moving, anchor], vec![(0, 1)])
    }

    #[test]
    fn truth_labels_map_to_bins() {
        let reference = sweep_graph(12, 0);
        let other = sweep_graph(12, 0);
        let labeling = OffsetLabeling { window_len: 4, offset_bins: (-3..=3).collect() };
        let truth = vec![0i64; 12];
        let set = make_training_windows(&reference, &other, &labeling, Some(&truth)).unwrap();
        assert_eq!(set.windows.len(), 9);
        let zero_class = labeling.class_of(0);
        for w in &set.windows {
            assert_eq!(w.label, zero_class);
        }
    }

    #[test]
    fn constant_truth_offset_labels_every_window() {
        let reference = sweep_graph(12, 0);
        let other = sweep_graph(12, 2);
        let labeling = OffsetLabeling { window_len: 4, offset_bins: (-3..=3).collect() };
        let truth = vec![2i64; 12];
        let set = make_training_windows(&reference, &other, &labeling, Some(&truth)).unwrap();
        for w in &set.windows {
            assert_eq!(w.label, labeling.class_of(2));
        }
    }

    #[test]
    fn pseudo_labels_recover_an_exact_shift() {
        // The other camera's node at frame k sits where the reference's node
        // sits at frame k + 1, so offset +1 aligns the sweeps exactly.
        let reference = sweep_graph(12, 0);
        let other = sweep_graph(12, 1);
        let labeling = OffsetLabeling { window_len: 4, offset_bins: (-3..=3).collect() };
        let set = make_training_windows(&reference, &other, &labeling, None).unwrap();
        for (w, start) in set.windows.iter().zip(&set.starts) {
            // Interior windows see a perfect zero-cost alignment at +1.
            if *start + labeling.window_len + 1 <= 11 {
                assert_eq!(w.label, labeling.class_of(1), "window at {start}");
            }
        }
    }

    #[test]
    fn insufficient_overlap_is_an_error() {
        let reference = sweep_graph(3, 0);
        let other = sweep_graph(3, 0);
        let labeling = OffsetLabeling::default();
        assert!(matches!(
            make_training_windows(&reference, &other, &labeling, None),
            Err(SyncError::InsufficientOverlap { available: 3, needed: 40 })
        ));
    }

    #[test]
    fn even_bins_are_rejected() {
        let labeling = OffsetLabeling { window_len: 4, offset_bins: vec![-1, 0] };
        assert!(labeling.validate().is_err());
        let no_zero = OffsetLabeling { window_len: 4, offset_bins: vec![-1, 1, 2] };
        assert!(no_zero.validate().is_err());
    }
}
