//! Exact nearest-neighbor search over a point cloud.
//!
//! A balanced kd-tree with cycling split axes. Queries return exactly the
//! linear-scan answer; ties are broken toward the smaller point index so
//! results are deterministic. The index is read-only after construction.

use super::{GeometryError, Point3, PointCloud};

struct Node {
    /// Index into the original cloud of the point stored at this node.
    point: u32,
    axis: u8,
    left: i32,
    right: i32,
}

/// Exact nearest-neighbor index over one cloud.
pub struct NnIndex {
    pts: Vec<Point3>,
    nodes: Vec<Node>,
    root: i32,
}

/// Builds an exact search index. Errors on an empty cloud.
pub fn build_nn_index(cloud: &PointCloud) -> Result<NnIndex, GeometryError> {
    NnIndex::build(cloud)
}

impl NnIndex {
    pub fn build(cloud: &PointCloud) -> Result<Self, GeometryError> {
        if cloud.is_empty() {
            return Err(GeometryError::EmptyCloud);
        }
        let pts = cloud.points().to_vec();
        let mut order: Vec<u32> = (0..pts.len() as u32).collect();
        let mut nodes = Vec::with_capacity(pts.len());
        let root = Self::build_rec(&pts, &mut order, 0, &mut nodes);
        Ok(Self { pts, nodes, root })
    }

    fn build_rec(pts: &[Point3], order: &mut [u32], depth: usize, nodes: &mut Vec<Node>) -> i32 {
        if order.is_empty() {
            return -1;
        }
        let axis = (depth % 3) as u8;
        let mid = order.len() / 2;
        // Duplicate coordinates are ordered by index so the split is unique.
        order.select_nth_unstable_by(mid, |&a, &b| {
            let ka = pts[a as usize].coord(axis as usize);
            let kb = pts[b as usize].coord(axis as usize);
            ka.partial_cmp(&kb).unwrap().then(a.cmp(&b))
        });
        let point = order[mid];
        let id = nodes.len() as i32;
        nodes.push(Node { point, axis, left: -1, right: -1 });
        let (lo, hi) = order.split_at_mut(mid);
        let left = Self::build_rec(pts, lo, depth + 1, nodes);
        let right = Self::build_rec(pts, &mut hi[1..], depth + 1, nodes);
        nodes[id as usize].left = left;
        nodes[id as usize].right = right;
        id
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    pub fn point(&self, index: usize) -> Point3 {
        self.pts[index]
    }

    /// Exact nearest neighbor: (cloud index, Euclidean distance).
    pub fn nearest(&self, query: Point3) -> (usize, f64) {
        let mut best = (f64::INFINITY, u32::MAX);
        self.nearest_rec(self.root, query, &mut best);
        (best.1 as usize, best.0.sqrt())
    }

    fn nearest_rec(&self, node: i32, query: Point3, best: &mut (f64, u32)) {
        if node < 0 {
            return;
        }
        let n = &self.nodes[node as usize];
        let p = self.pts[n.point as usize];
        let d2 = query.dist2(p);
        if d2 < best.0 || (d2 == best.0 && n.point < best.1) {
            *best = (d2, n.point);
        }
        let delta = query.coord(n.axis as usize) - p.coord(n.axis as usize);
        let (near, far) = if delta < 0.0 { (n.left, n.right) } else { (n.right, n.left) };
        self.nearest_rec(near, query, best);
        if delta * delta <= best.0 {
            self.nearest_rec(far, query, best);
        }
    }

    /// The k exact nearest neighbors sorted by (distance, index).
    pub fn k_nearest(&self, query: Point3, k: usize) -> Vec<(usize, f64)> {
        if k == 0 {
            return Vec::new();
        }
        // Max-heap over (squared distance bits, index); non-negative f64
        // compares correctly through its bit pattern.
        let mut heap: std::collections::BinaryHeap<(u64, u32)> = std::collections::BinaryHeap::new();
        self.k_nearest_rec(self.root, query, k, &mut heap);
        let mut out: Vec<(usize, f64)> = heap
            .into_iter()
            .map(|(bits, i)| (i as usize, f64::from_bits(bits).sqrt()))
            .collect();
        out.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        out
    }

    fn k_nearest_rec(
        &self,
        node: i32,
        query: Point3,
        k: usize,
        heap: &mut std::collections::BinaryHeap<(u64, u32)>,
    ) {
        if node < 0 {
            return;
        }
        let n = &self.nodes[node as usize];
        let p = self.pts[n.point as usize];
        let key = (query.dist2(p).to_bits(), n.point);
        if heap.len() < k {
            heap.push(key);
        } else if key < *heap.peek().unwrap() {
            heap.pop();
            heap.push(key);
        }
        let delta = query.coord(n.axis as usize) - p.coord(n.axis as usize);
        let (near, far) = if delta < 0.0 { (n.left, n.right) } else { (n.right, n.left) };
        self.k_nearest_rec(near, query, k, heap);
        let bound = if heap.len() < k { f64::INFINITY } else { f64::from_bits(heap.peek().unwrap().0) };
        if delta * delta <= bound {
            self.k_nearest_rec(far, query, k, heap);
        }
    }

    /// All points within `radius` of the query, sorted by (distance, index).
    pub fn within_radius(&self, query: Point3, radius: f64) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        self.radius_rec(self.root, query, radius * radius, &mut out);
        out.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        out.iter().map(|&(i, d2)| (i, d2.sqrt())).collect()
    }

    fn radius_rec(&self, node: i32, query: Point3, r2: f64, out: &mut Vec<(usize, f64)>) {
        if node < 0 {
            return;
        }
        let n = &self.nodes[node as usize];
        let p = self.pts[n.point as usize];
        let d2 = query.dist2(p);
        if d2 <= r2 {
            out.push((n.point as usize, d2));
        }
        let delta = query.coord(n.axis as usize) - p.coord(n.axis as usize);
        let (near, far) = if delta < 0.0 { (n.left, n.right) } else { (n.right, n.left) };
        self.radius_rec(near, query, r2, out);
        if delta * delta <= r2 {
            self.radius_rec(far, query, r2, out);
        }
    }
}
