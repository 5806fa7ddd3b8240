//! Partitioned, degree-normalized graph propagation matrices.

use ndarray::Array2;

use crate::geometry::Point3;
use crate::icfp::DynamicGraph;

/// Default number of neighbor-set partitions.
pub const DEFAULT_PARTITIONS: usize = 3;

/// K adjacency partitions, kept both raw and pre-normalized as
/// `Λ_k^{-1/2} A_k Λ_k^{-1/2}` with row-sum degrees; zero-degree rows
/// normalize to zero.
#[derive(Debug, Clone)]
pub struct GraphStructure {
    node_count: usize,
    raw: Vec<Array2<f64>>,
    normalized: Vec<Array2<f64>>,
}

fn normalize(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let deg: f64 = a.row(i).sum();
            if deg > 0.0 {
                1.0 / deg.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    Array2::from_shape_fn((n, n), |(i, j)| inv_sqrt[i] * a[(i, j)] * inv_sqrt[j])
}

impl GraphStructure {
    /// Builds the spatial-configuration partitions from node positions and an
    /// undirected edge list: partition 1 holds self-loops and equidistant
    /// ties, partition 2 neighbors closer to the graph centroid than the
    /// node, partition 3 neighbors farther away.
    pub fn from_positions(positions: &[Point3], edges: &[(usize, usize)]) -> Self {
        let n = positions.len();
        let mut centroid = Point3::default();
        for p in positions {
            centroid = centroid.add(*p);
        }
        if n > 0 {
            centroid = centroid.scale(1.0 / n as f64);
        }
        let dist: Vec<f64> = positions.iter().map(|p| p.dist(centroid)).collect();

        let mut a: Vec<Array2<f64>> = (0..DEFAULT_PARTITIONS).map(|_| Array2::zeros((n, n))).collect();
        for i in 0..n {
            a[0][(i, i)] = 1.0;
        }
        for &(i, j) in edges {
            // Label the edge from each endpoint's perspective.
            for (from, to) in [(i, j), (j, i)] {
                if dist[to] < dist[from] {
                    a[1][(from, to)] = 1.0;
                } else if dist[to] > dist[from] {
                    a[2][(from, to)] = 1.0;
                } else {
                    a[0][(from, to)] = 1.0;
                }
            }
        }
        let normalized = a.iter().map(normalize).collect();
        Self { node_count: n, raw: a, normalized }
    }

    /// Positions and edges from a dynamic graph's first retained frame.
    pub fn from_graph(graph: &DynamicGraph) -> Self {
        let positions: Vec<Point3> = graph.trajectories().iter().map(|t| t[0]).collect();
        Self::from_positions(&positions, graph.edges())
    }

    /// Normalizes caller-provided raw adjacency partitions. Intended for
    /// tests and non-spatial layouts; partitions must be square and equally
    /// sized.
    pub fn from_raw_partitions(partitions: Vec<Array2<f64>>) -> Self {
        assert!(!partitions.is_empty());
        let n = partitions[0].nrows();
        for p in &partitions {
            assert_eq!(p.dim(), (n, n), "partition shape mismatch");
        }
        let normalized = partitions.iter().map(normalize).collect();
        Self { node_count: n, raw: partitions, normalized }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn partition_count(&self) -> usize {
        self.normalized.len()
    }

    /// The pre-normalized propagation matrix for partition `k`.
    pub fn normalized_partition(&self, k: usize) -> &Array2<f64> {
        &self.normalized[k]
    }

    /// The raw adjacency partition `k` before degree normalization.
    pub fn raw_partition(&self, k: usize) -> &Array2<f64> {
        &self.raw[k]
    }
}
