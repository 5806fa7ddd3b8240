//! Dynamic graph construction: chained correspondences across a frame
//! sequence, low-density frame skipping, and key-node adjacency.

use rayon::prelude::*;

use super::{correspondence_bound, icfp_register, IcfpError, IcfpParams};
use crate::geometry::{build_nn_index, Frame, Point3, PointCloud};

/// Per-camera key-node trajectories with adjacency.
///
/// Every node has a position for every retained frame; `trajectories[n][j]`
/// is node `n` at `valid_frames[j]`. Edges are undirected (min, max) pairs
/// without self-loops.
#[derive(Debug, Clone)]
pub struct DynamicGraph {
    pub camera_id: Option<u8>,
    valid_frames: Vec<usize>,
    trajectories: Vec<Vec<Point3>>,
    edges: Vec<(usize, usize)>,
}

impl DynamicGraph {
    pub fn new(
        camera_id: Option<u8>,
        valid_frames: Vec<usize>,
        trajectories: Vec<Vec<Point3>>,
        edges: Vec<(usize, usize)>,
    ) -> Self {
        for t in &trajectories {
            assert_eq!(t.len(), valid_frames.len(), "incomplete trajectory");
        }
        for &(a, b) in &edges {
            assert!(a < b && b < trajectories.len(), "bad edge ({a}, {b})");
        }
        Self { camera_id, valid_frames, trajectories, edges }
    }

    pub fn node_count(&self) -> usize {
        self.trajectories.len()
    }

    /// Retained frame indices, ascending.
    pub fn valid_frames(&self) -> &[usize] {
        &self.valid_frames
    }

    pub fn trajectories(&self) -> &[Vec<Point3>] {
        &self.trajectories
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Node positions at retained-frame position `slot` (not frame index).
    pub fn positions_at_slot(&self, slot: usize) -> PointCloud {
        PointCloud::new(self.trajectories.iter().map(|t| t[slot]).collect())
    }

    /// Position of the retained frame index in `valid_frames`, if retained.
    pub fn slot_of_frame(&self, frame_index: usize) -> Option<usize> {
        self.valid_frames.binary_search(&frame_index).ok()
    }
}

/// Farthest-point subsample of `points`, seeded at index 0. Returns the
/// chosen indices in selection order.
fn farthest_point_sample(points: &[Point3], count: usize) -> Vec<usize> {
    if count >= points.len() {
        return (0..points.len()).collect();
    }
    let mut chosen = Vec::with_capacity(count);
    let mut min_dist = vec![f64::INFINITY; points.len()];
    let mut current = 0usize;
    chosen.push(current);
    for _ in 1..count {
        let p = points[current];
        let mut best = (0usize, -1.0);
        for (i, q) in points.iter().enumerate() {
            let d = p.dist2(*q);
            if d < min_dist[i] {
                min_dist[i] = d;
            }
            if min_dist[i] > best.1 && !chosen.contains(&i) {
                best = (i, min_dist[i]);
            }
        }
        current = best.0;
        chosen.push(current);
    }
    chosen
}

/// Builds the dynamic graph for one camera's frame sequence.
///
/// Frames whose cloud is smaller than `min_density_fraction` of the median
/// cloud size are skipped. Consecutive retained frames are matched with
/// [`icfp_register`]; a chain link is kept only when its distance lies within
/// the bound `l = m + ζσ` of that pair's correspondence distances, and a node
/// survives only if its chain is unbroken across all retained frames.
/// Adjacency is a symmetrized k-nearest-neighbor graph over node positions in
/// the first retained frame.
pub fn build_dynamic_graph(
    frames: &[Frame],
    params: &IcfpParams,
    knn_edges: usize,
) -> Result<DynamicGraph, IcfpError> {
    let mut sizes: Vec<usize> = frames.iter().map(|f| f.cloud.len()).collect();
    sizes.sort_unstable();
    let median = if sizes.is_empty() { 0 } else { sizes[sizes.len() / 2] };
    let threshold = params.min_density_fraction * median as f64;
    let retained: Vec<usize> = frames
        .iter()
        .enumerate()
        .filter(|(_, f)| f.cloud.len() as f64 >= threshold && !f.cloud.is_empty())
        .map(|(i, _)| i)
        .collect();
    if retained.len() < 2 {
        return Err(IcfpError::InsufficientFrames { retained: retained.len(), total: frames.len() });
    }

    // One correspondence map per consecutive retained pair; pairs are
    // independent, so they run in parallel with deterministic order.
    let links: Vec<Result<Vec<Option<usize>>, IcfpError>> = retained
        .par_windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let result = icfp_register(&frames[a].cloud, &frames[b].cloud, params)?;
            let distances: Vec<f64> = result.map.pairs.iter().map(|p| p.2).collect();
            let gate = correspondence_bound(&distances, params.zeta)?;
            let mut link = vec![None; frames[a].cloud.len()];
            for &(i, j, d) in &result.map.pairs {
                if d <= gate {
                    link[i] = Some(j);
                }
            }
            Ok(link)
        })
        .collect();
    let mut chain_links = Vec::with_capacity(links.len());
    for l in links {
        chain_links.push(l?);
    }

    // Chain every first-frame point through the links.
    let first_cloud = &frames[retained[0]].cloud;
    let mut survivors: Vec<(usize, Vec<usize>)> = Vec::new();
    'node: for start in 0..first_cloud.len() {
        let mut path = Vec::with_capacity(retained.len());
        path.push(start);
        let mut current = start;
        for link in &chain_links {
            match link[current] {
                Some(next) => {
                    current = next;
                    path.push(current);
                }
                None => continue 'node,
            }
        }
        survivors.push((start, path));
    }
    if survivors.is_empty() {
        return Err(IcfpError::NoPersistentCorrespondences);
    }

    if let Some(cap) = params.max_nodes {
        if survivors.len() > cap {
            let firsts: Vec<Point3> =
                survivors.iter().map(|(s, _)| first_cloud.points()[*s]).collect();
            let mut keep = farthest_point_sample(&firsts, cap);
            keep.sort_unstable();
            survivors = keep.into_iter().map(|i| survivors[i].clone()).collect();
        }
    }

    let valid_frames: Vec<usize> = retained.iter().map(|&i| frames[i].frame_index).collect();
    let trajectories: Vec<Vec<Point3>> = survivors
        .iter()
        .map(|(_, path)| {
            path.iter()
                .zip(&retained)
                .map(|(&idx, &fr)| frames[fr].cloud.points()[idx])
                .collect()
        })
        .collect();

    // kNN adjacency over first-retained-frame positions, symmetrized.
    let firsts = PointCloud::new(trajectories.iter().map(|t| t[0]).collect());
    let index = build_nn_index(&firsts)?;
    let mut edge_set = std::collections::BTreeSet::new();
    let k = knn_edges.min(firsts.len().saturating_sub(1));
    for i in 0..firsts.len() {
        for (j, _) in index.k_nearest(firsts.points()[i], k + 1) {
            if j != i {
                edge_set.insert((i.min(j), i.max(j)));
            }
        }
    }

    Ok(DynamicGraph::new(
        frames.first().map(|f| f.camera_id),
        valid_frames,
        trajectories,
        edge_set.into_iter().collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| {
                    Point3::new(
                        rng.random_range(-50.0..50.0),
                        rng.random_range(-50.0..50.0),
                        rng.random_range(-10.0..10.0),
                    )
                })
                .collect(),
        )
    }

    fn frame(camera_id: u8, frame_index: usize, cloud: PointCloud) -> Frame {
        Frame { camera_id, frame_index, timestamp: frame_index as f64 / 15.0, cloud }
    }

    #[test]
    fn identical_frames_keep_every_node_with_constant_trajectories() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let cloud = random_cloud(&mut rng, 100);
        let frames: Vec<Frame> = (0..3).map(|i| frame(1, i, cloud.clone())).collect();
        let graph = build_dynamic_graph(&frames, &IcfpParams::default(), 4).unwrap();
        assert_eq!(graph.node_count(), 100);
        assert_eq!(graph.valid_frames(), &[0, 1, 2]);
        for t in graph.trajectories() {
            assert_eq!(t.len(), 3);
            assert_eq!(t[0], t[1]);
            assert_eq!(t[1], t[2]);
        }
    }

    #[test]
    fn hundred_frames_chain_ninety_nine_pairs() {
        // Small clouds keep this cheap; the point is the chain length.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let cloud = random_cloud(&mut rng, 30);
        let frames: Vec<Frame> = (0..100).map(|i| frame(1, i, cloud.clone())).collect();
        let graph = build_dynamic_graph(&frames, &IcfpParams::default(), 3).unwrap();
        assert_eq!(graph.valid_frames().len(), 100);
        for t in graph.trajectories() {
            assert_eq!(t.len(), 100);
        }
    }

    #[test]
    fn low_density_frames_are_skipped() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let big = random_cloud(&mut rng, 1000);
        let small = PointCloud::new(big.points()[..50].to_vec());
        let frames = vec![
            frame(1, 0, big.clone()),
            frame(1, 1, big.clone()),
            frame(1, 2, small),
            frame(1, 3, big.clone()),
        ];
        let params = IcfpParams { min_density_fraction: 0.2, ..IcfpParams::default() };
        let graph = build_dynamic_graph(&frames, &params, 4).unwrap();
        assert_eq!(graph.valid_frames(), &[0, 1, 3]);
    }

    #[test]
    fn fewer_than_two_retained_frames_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let cloud = random_cloud(&mut rng, 40);
        let frames = vec![frame(1, 0, cloud)];
        assert!(matches!(
            build_dynamic_graph(&frames, &IcfpParams::default(), 4),
            Err(IcfpError::InsufficientFrames { retained: 1, total: 1 })
        ));
    }

    #[test]
    fn adjacency_is_symmetric_without_self_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let cloud = random_cloud(&mut rng, 60);
        let frames: Vec<Frame> = (0..3).map(|i| frame(2, i, cloud.clone())).collect();
        let graph = build_dynamic_graph(&frames, &IcfpParams::default(), 4).unwrap();
        for &(a, b) in graph.edges() {
            assert!(a < b);
            assert!(b < graph.node_count());
        }
        let unique: std::collections::BTreeSet<_> = graph.edges().iter().collect();
        assert_eq!(unique.len(), graph.edges().len());
    }

    #[test]
    fn node_cap_subsamples_survivors() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let cloud = random_cloud(&mut rng, 80);
        let frames: Vec<Frame> = (0..3).map(|i| frame(1, i, cloud.clone())).collect();
        let params = IcfpParams { max_nodes: Some(16), ..IcfpParams::default() };
        let graph = build_dynamic_graph(&frames, &params, 4).unwrap();
        assert_eq!(graph.node_count(), 16);
    }
}
