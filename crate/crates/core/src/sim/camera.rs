//! Virtual cameras: poses, accumulative delay rates, and view rendering.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{Point3, PointCloud, TriMesh};

/// One depth camera. The clock reports nominal frame times; the true capture
/// moment of frame `k` lags by `(k + 1) · delay_per_frame_ms` plus jitter,
/// so the delay accumulates over a session.
#[derive(Debug, Clone)]
pub struct VirtualCamera {
    pub id: u8,
    pub position: Point3,
    pub look_at: Point3,
    /// Accumulative per-frame delay rate in milliseconds.
    pub delay_per_frame_ms: f64,
    /// Visibility half-angle in degrees between a surface normal and the
    /// direction toward the camera.
    pub half_angle_deg: f64,
}

/// The six-camera rig around a capture volume centered at `center`: four
/// upper cameras and two lower ones. Per-camera delay rates average 2 ms per
/// frame; camera 1 is the reference timeline.
pub fn default_rig(center: Point3, radius: f64) -> Vec<VirtualCamera> {
    // Rates average 2.0 ms; the spread makes cameras drift apart by up to
    // about 1.4 ms per frame relative to the reference.
    let rates = [2.0, 0.6, 1.2, 2.8, 3.4, 2.0];
    let poses = [
        (45.0f64, 45.0f64),
        (135.0, 45.0),
        (225.0, 45.0),
        (315.0, 45.0),
        (90.0, -60.0),
        (270.0, -60.0),
    ];
    poses
        .iter()
        .zip(rates)
        .enumerate()
        .map(|(i, (&(azimuth, elevation), rate))| {
            let az = azimuth.to_radians();
            let el = elevation.to_radians();
            let position = Point3::new(
                center.x + radius * el.cos() * az.cos(),
                center.y + radius * el.cos() * az.sin(),
                center.z + radius * el.sin(),
            );
            VirtualCamera {
                id: (i + 1) as u8,
                position,
                look_at: center,
                delay_per_frame_ms: rate,
                half_angle_deg: 75.0,
            }
        })
        .collect()
}

/// Whether a surface point with `normal` is visible from `camera`.
fn visible(camera: &VirtualCamera, point: Point3, normal: Point3) -> bool {
    let to_camera = camera.position.sub(point);
    let nn = normal.norm();
    let tc = to_camera.norm();
    if nn == 0.0 || tc == 0.0 {
        return false;
    }
    let cos = normal.dot(to_camera) / (nn * tc);
    cos >= camera.half_angle_deg.to_radians().cos()
}

/// Samples up to `count` surface points whose outward normal faces the
/// camera within its half-angle, then adds isotropic Gaussian noise of
/// `noise_sigma` (millimeters). Fewer points are returned when too little of
/// the surface is visible; an entirely hidden surface yields an empty cloud.
///
/// `sample_rng` drives face/barycentric sampling and `noise_rng` the noise,
/// so the underlying surface samples do not depend on the noise level.
/// Returns the cloud and each point's (face, barycentric) provenance.
pub fn render_view(
    mesh: &TriMesh,
    camera: &VirtualCamera,
    count: usize,
    noise_sigma: f64,
    sample_rng: &mut ChaCha8Rng,
    noise_rng: &mut ChaCha8Rng,
) -> (PointCloud, Vec<(usize, f64, f64)>) {
    let faces = mesh.faces();
    let mut cumulative = Vec::with_capacity(faces.len());
    let mut total = 0.0;
    for f in 0..faces.len() {
        total += 0.5 * mesh.face_normal(f).norm();
        cumulative.push(total);
    }
    if total <= 0.0 {
        return (PointCloud::default(), Vec::new());
    }

    let mut points = Vec::with_capacity(count);
    let mut provenance = Vec::with_capacity(count);
    let max_attempts = count.saturating_mul(60).max(1000);
    let mut attempts = 0;
    while points.len() < count && attempts < max_attempts {
        attempts += 1;
        let pick = sample_rng.random_range(0.0..total);
        let face = cumulative.partition_point(|&c| c < pick).min(faces.len() - 1);
        let [ia, ib, ic] = faces[face];
        let (va, vb, vc) =
            (mesh.vertices()[ia], mesh.vertices()[ib], mesh.vertices()[ic]);
        let mut r1: f64 = sample_rng.random_range(0.0..1.0);
        let mut r2: f64 = sample_rng.random_range(0.0..1.0);
        if r1 + r2 > 1.0 {
            r1 = 1.0 - r1;
            r2 = 1.0 - r2;
        }
        let point = va
            .add(vb.sub(va).scale(r1))
            .add(vc.sub(va).scale(r2));
        if visible(camera, point, mesh.face_normal(face)) {
            points.push(point);
            provenance.push((face, r1, r2));
        }
    }

    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).expect("sigma is non-negative");
        for p in &mut points {
            *p = Point3::new(
                p.x + normal.sample(noise_rng),
                p.y + normal.sample(noise_rng),
                p.z + normal.sample(noise_rng),
            );
        }
    }
    (PointCloud::new(points), provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::shape::{shape_at, DeformingShape};
    use rand::SeedableRng;

    fn camera_at(position: Point3, half_angle_deg: f64) -> VirtualCamera {
        VirtualCamera {
            id: 1,
            position,
            look_at: Point3::default(),
            delay_per_frame_ms: 2.0,
            half_angle_deg,
        }
    }

    fn uv_sphere(radius: f64, rings: usize, segments: usize) -> TriMesh {
        let mut vertices = vec![
            Point3::new(0.0, 0.0, radius),
            Point3::new(0.0, 0.0, -radius),
        ];
        for i in 1..rings {
            let phi = std::f64::consts::PI * i as f64 / rings as f64;
            for j in 0..segments {
                let theta = std::f64::consts::TAU * j as f64 / segments as f64;
                vertices.push(Point3::new(
                    radius * phi.sin() * theta.cos(),
                    radius * phi.sin() * theta.sin(),
                    radius * phi.cos(),
                ));
            }
        }
        let rv = |i: usize, j: usize| 2 + (i - 1) * segments + (j % segments);
        let mut faces = Vec::new();
        for j in 0..segments {
            faces.push([0, rv(1, j), rv(1, j + 1)]);
            faces.push([1, rv(rings - 1, j + 1), rv(rings - 1, j)]);
        }
        for i in 1..rings - 1 {
            for j in 0..segments {
                faces.push([rv(i, j), rv(i + 1, j), rv(i + 1, j + 1)]);
                faces.push([rv(i, j), rv(i + 1, j + 1), rv(i, j + 1)]);
            }
        }
        TriMesh::new(vertices, faces).unwrap()
    }

    #[test]
    fn full_angle_sees_the_whole_surface() {
        let mesh = shape_at(&DeformingShape::default(), 0.0);
        let cam = camera_at(Point3::new(500.0, 0.0, 300.0), 180.0);
        let mut s = ChaCha8Rng::seed_from_u64(1);
        let mut n = ChaCha8Rng::seed_from_u64(2);
        let (cloud, _) = render_view(&mesh, &cam, 500, 0.0, &mut s, &mut n);
        assert_eq!(cloud.len(), 500);
    }

    #[test]
    fn opposed_cameras_partition_a_sphere() {
        let sphere = uv_sphere(100.0, 16, 24);
        let a = camera_at(Point3::new(1.0e5, 0.0, 0.0), 90.0);
        let b = camera_at(Point3::new(-1.0e5, 0.0, 0.0), 90.0);
        let visible_faces = |cam: &VirtualCamera| -> std::collections::BTreeSet<usize> {
            (0..sphere.faces().len())
                .filter(|&f| {
                    let [ia, ib, ic] = sphere.faces()[f];
                    let centroid = sphere.vertices()[ia]
                        .add(sphere.vertices()[ib])
                        .add(sphere.vertices()[ic])
                        .scale(1.0 / 3.0);
                    visible(cam, centroid, sphere.face_normal(f))
                })
                .collect()
        };
        let fa = visible_faces(&a);
        let fb = visible_faces(&b);
        let total = sphere.faces().len() as f64;
        let union: std::collections::BTreeSet<_> = fa.union(&fb).collect();
        assert!(union.len() as f64 / total >= 0.99, "union {}", union.len());
        assert!(fa.len() as f64 / total <= 0.60);
        assert!(fb.len() as f64 / total <= 0.60);
    }

    #[test]
    fn same_seed_renders_identical_clouds() {
        let mesh = shape_at(&DeformingShape::default(), 0.3);
        let cam = camera_at(Point3::new(400.0, 200.0, 250.0), 75.0);
        let render = || {
            let mut s = ChaCha8Rng::seed_from_u64(7);
            let mut n = ChaCha8Rng::seed_from_u64(8);
            render_view(&mesh, &cam, 300, 0.1, &mut s, &mut n).0
        };
        assert_eq!(render(), render());
    }

    #[test]
    fn doubling_sigma_doubles_the_rms_deviation() {
        let mesh = shape_at(&DeformingShape::default(), 0.0);
        let cam = camera_at(Point3::new(400.0, 0.0, 300.0), 120.0);
        let render = |sigma: f64| {
            let mut s = ChaCha8Rng::seed_from_u64(9);
            let mut n = ChaCha8Rng::seed_from_u64(10);
            render_view(&mesh, &cam, 400, sigma, &mut s, &mut n).0
        };
        let base = render(0.0);
        let one = render(0.5);
        let two = render(1.0);
        let rms = |cloud: &PointCloud| {
            let sum: f64 = cloud
                .points()
                .iter()
                .zip(base.points())
                .map(|(p, q)| p.dist2(*q))
                .sum();
            (sum / cloud.len() as f64).sqrt()
        };
        let ratio = rms(&two) / rms(&one);
        assert!((ratio - 2.0).abs() < 1e-9, "ratio {ratio}");
    }

    #[test]
    fn default_rig_rates_average_two_milliseconds() {
        let rig = default_rig(Point3::new(120.0, 0.0, 30.0), 600.0);
        assert_eq!(rig.len(), 6);
        let mean: f64 = rig.iter().map(|c| c.delay_per_frame_ms).sum::<f64>() / 6.0;
        assert!((mean - 2.0).abs() < 1e-12);
        assert_eq!(rig[0].delay_per_frame_ms, 2.0);
    }
}
