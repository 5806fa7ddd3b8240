//! Point-cloud and triangle-mesh primitives shared by the whole pipeline.
//!
//! Coordinates are in millimeters throughout. All types are immutable after
//! construction and safe to share across threads.

mod io;
mod kdtree;
mod metrics;

pub use io::{
    load_cloud, load_mesh, save_cloud, save_mesh, MeshFormat, MeshIoError, PlyEncoding,
};
pub use kdtree::{build_nn_index, NnIndex};
pub use metrics::{cpgd, cpgd_sym, cpgd_to_index, rmse};

use thiserror::Error;

/// Errors from geometric construction and queries.
#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("empty cloud")]
    EmptyCloud,
    #[error("empty value list")]
    EmptyList,
    #[error("empty mesh")]
    EmptyMesh,
    #[error("face {face} references vertex {index} but mesh has {limit} vertices")]
    FaceIndexOutOfRange { face: usize, index: usize, limit: usize },
    #[error("face {face} is degenerate: indices ({0}, {1}, {2}) are not distinct", .indices.0, .indices.1, .indices.2)]
    DegenerateFace { face: usize, indices: (usize, usize, usize) },
}

/// A 3D point, coordinates in millimeters. Coordinates must be finite.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        debug_assert!(
            x.is_finite() && y.is_finite() && z.is_finite(),
            "non-finite coordinate ({x}, {y}, {z})"
        );
        Self { x, y, z }
    }

    pub fn coord(&self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis {axis} out of range"),
        }
    }

    pub fn add(&self, other: Point3) -> Point3 {
        Point3::new(self.x + other.x, self.y + other.y, self.z + other.z)
    }

    pub fn sub(&self, other: Point3) -> Point3 {
        Point3::new(self.x - other.x, self.y - other.y, self.z - other.z)
    }

    pub fn scale(&self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn dot(&self, other: Point3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(&self, other: Point3) -> Point3 {
        Point3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(&self) -> f64 {
        self.dot(*self).sqrt()
    }

    pub fn dist2(&self, other: Point3) -> f64 {
        let d = self.sub(other);
        d.dot(d)
    }

    pub fn dist(&self, other: Point3) -> f64 {
        self.dist2(other).sqrt()
    }
}

/// An ordered list of points. Indices are stable across operations that do
/// not add or remove points.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self { points }
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Point3> {
        if self.points.is_empty() {
            return None;
        }
        let mut acc = Point3::default();
        for p in &self.points {
            acc = acc.add(*p);
        }
        Some(acc.scale(1.0 / self.points.len() as f64))
    }

    /// New cloud with every point shifted by `t`.
    pub fn translated(&self, t: Point3) -> PointCloud {
        PointCloud::new(self.points.iter().map(|p| p.add(t)).collect())
    }

    /// Concatenation preserving argument order.
    pub fn concat(clouds: &[&PointCloud]) -> PointCloud {
        let mut points = Vec::with_capacity(clouds.iter().map(|c| c.len()).sum());
        for c in clouds {
            points.extend_from_slice(c.points());
        }
        PointCloud::new(points)
    }
}

/// One timestamped point cloud captured by one camera.
///
/// `timestamp` is the camera clock's nominal sample time; any drift between
/// the clock and the true capture moment shows up as geometry mismatch, not
/// as a timestamp change.
#[derive(Debug, Clone)]
pub struct Frame {
    pub camera_id: u8,
    pub frame_index: usize,
    pub timestamp: f64,
    pub cloud: PointCloud,
}

/// A triangle mesh with a derived undirected edge set.
#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<Point3>,
    faces: Vec<[usize; 3]>,
    edges: Vec<(usize, usize)>,
}

impl TriMesh {
    /// Validates face indices and rejects degenerate faces.
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self, GeometryError> {
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                if v >= n {
                    return Err(GeometryError::FaceIndexOutOfRange { face: fi, index: v, limit: n });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(GeometryError::DegenerateFace { face: fi, indices: (f[0], f[1], f[2]) });
            }
        }
        let mut edge_set = std::collections::BTreeSet::new();
        for f in &faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                edge_set.insert((a.min(b), a.max(b)));
            }
        }
        Ok(Self { vertices, faces, edges: edge_set.into_iter().collect() })
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Undirected edges as (min, max) index pairs in lexicographic order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Same connectivity over a new vertex list.
    pub fn with_vertices(&self, vertices: Vec<Point3>) -> Result<Self, GeometryError> {
        if vertices.len() != self.vertices.len() {
            return Err(GeometryError::FaceIndexOutOfRange {
                face: 0,
                index: self.vertices.len(),
                limit: vertices.len(),
            });
        }
        Ok(Self { vertices, faces: self.faces.clone(), edges: self.edges.clone() })
    }

    pub fn as_cloud(&self) -> PointCloud {
        PointCloud::new(self.vertices.clone())
    }

    /// Area-weighted face normal (not normalized).
    pub fn face_normal(&self, face: usize) -> Point3 {
        let [a, b, c] = self.faces[face];
        let e1 = self.vertices[b].sub(self.vertices[a]);
        let e2 = self.vertices[c].sub(self.vertices[a]);
        e1.cross(e2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_rejects_out_of_range_face() {
        let verts = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)];
        let err = TriMesh::new(verts, vec![[0, 1, 2]]).unwrap_err();
        assert!(matches!(err, GeometryError::FaceIndexOutOfRange { index: 2, .. }));
    }

    #[test]
    fn mesh_rejects_degenerate_face() {
        let verts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ];
        let err = TriMesh::new(verts, vec![[0, 1, 1]]).unwrap_err();
        assert!(matches!(err, GeometryError::DegenerateFace { .. }));
    }

    #[test]
    fn mesh_edges_are_unique_and_sorted() {
        let verts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(1.0, 1.0, 0.0),
        ];
        let mesh = TriMesh::new(verts, vec![[0, 1, 2], [2, 1, 3]]).unwrap();
        assert_eq!(mesh.edges(), &[(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)]);
    }
}
