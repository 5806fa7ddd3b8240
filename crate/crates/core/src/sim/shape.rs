//! The parametric deforming foot proxy.
//!
//! A superellipse cross-section swept along the length axis with smooth
//! width/height profiles and a toe-side bulge. Deformation is analytic in
//! time: length and width oscillate with configured peak-to-peak fractions
//! and a traveling vertical ripple stands in for gait bending. The ripple
//! moves points in z only, so the length (x) and width (y) extents carry
//! exactly the programmed oscillations.

use crate::geometry::{Point3, TriMesh};

/// Parametric shape plus its deformation program. All lengths in
/// millimeters; amplitudes are peak-to-peak fractions of the base dimension.
#[derive(Debug, Clone)]
pub struct DeformingShape {
    pub length_mm: f64,
    pub width_mm: f64,
    pub height_mm: f64,
    /// Rings along the length axis.
    pub rings: usize,
    /// Vertices per ring.
    pub segments: usize,
    /// Peak-to-peak length oscillation as a fraction of `length_mm`.
    pub length_amp: f64,
    /// Peak-to-peak width oscillation as a fraction of `width_mm`.
    pub width_amp: f64,
    /// Traveling-ripple amplitude in millimeters (vertical displacement).
    pub bend_mm: f64,
    /// Gait cycle period in seconds.
    pub period_s: f64,
}

impl Default for DeformingShape {
    fn default() -> Self {
        Self {
            length_mm: 240.0,
            width_mm: 90.0,
            height_mm: 60.0,
            rings: 24,
            segments: 20,
            length_amp: 0.03,
            width_amp: 0.05,
            bend_mm: 6.0,
            period_s: 1.0,
        }
    }
}

/// Signed power that keeps the superellipse symmetric.
fn signed_pow(v: f64, exponent: f64) -> f64 {
    v.signum() * v.abs().powf(exponent)
}

const CROSS_SECTION_EXPONENT: f64 = 2.5;

/// Half-width profile along the normalized length coordinate: rounded heel
/// and toe with a bulge around the ball of the foot.
fn width_profile(u: f64) -> f64 {
    let base = (std::f64::consts::PI * u).sin().powf(0.55);
    let dev = (u - 0.68) / 0.13;
    let ball = 1.0 + 0.18 * (-0.5 * dev * dev).exp();
    base * ball
}

/// Half-height profile: mildly taller toward the heel.
fn height_profile(u: f64) -> f64 {
    (std::f64::consts::PI * u).sin().powf(0.7) * (1.0 + 0.15 * (1.0 - u))
}

impl DeformingShape {
    /// Length scale factor at time `t`.
    pub fn length_scale(&self, t: f64) -> f64 {
        let phase = std::f64::consts::TAU * t / self.period_s;
        1.0 + 0.5 * self.length_amp * phase.sin()
    }

    /// Width scale factor at time `t` (phase-shifted from the length).
    pub fn width_scale(&self, t: f64) -> f64 {
        let phase = std::f64::consts::TAU * t / self.period_s + std::f64::consts::FRAC_PI_3;
        1.0 + 0.5 * self.width_amp * phase.sin()
    }

    fn ripple(&self, u: f64, t: f64) -> f64 {
        self.bend_mm
            * (std::f64::consts::TAU * (2.0 * u - t / self.period_s)).sin()
            * (std::f64::consts::PI * u).sin()
    }

    fn vertex(&self, u: f64, theta: f64, t: f64) -> Point3 {
        let sx = self.length_scale(t);
        let sy = self.width_scale(t);
        let half_w = 0.5 * self.width_mm * width_profile(u);
        let half_h = 0.5 * self.height_mm * height_profile(u);
        let y_unit = signed_pow(theta.sin(), 2.0 / CROSS_SECTION_EXPONENT);
        let z_unit = signed_pow(theta.cos(), 2.0 / CROSS_SECTION_EXPONENT);
        Point3::new(
            self.length_mm * u * sx,
            half_w * y_unit * sy,
            half_h + half_h * z_unit + self.ripple(u, t),
        )
    }
}

/// Deterministic mesh for time `t`, with per-vertex surface parameters
/// `(u, theta)`.
pub fn shape_with_params(shape: &DeformingShape, t: f64) -> (TriMesh, Vec<(f64, f64)>) {
    let rings = shape.rings.max(2);
    let segments = shape.segments.max(3);
    let mut vertices = Vec::with_capacity(rings * segments + 2);
    let mut params = Vec::with_capacity(rings * segments + 2);

    // Heel and toe apexes close the two open ends.
    let sx = shape.length_scale(t);
    vertices.push(Point3::new(0.0, 0.0, shape.ripple(0.0, t)));
    params.push((0.0, 0.0));
    vertices.push(Point3::new(shape.length_mm * sx, 0.0, shape.ripple(1.0, t)));
    params.push((1.0, 0.0));

    for i in 0..rings {
        let u = (i + 1) as f64 / (rings + 1) as f64;
        for j in 0..segments {
            let theta = std::f64::consts::TAU * j as f64 / segments as f64;
            vertices.push(shape.vertex(u, theta, t));
            params.push((u, theta));
        }
    }

    let ring_vertex = |i: usize, j: usize| 2 + i * segments + (j % segments);
    let mut faces = Vec::with_capacity(2 * rings * segments);
    for j in 0..segments {
        faces.push([0, ring_vertex(0, j), ring_vertex(0, j + 1)]);
        faces.push([1, ring_vertex(rings - 1, j + 1), ring_vertex(rings - 1, j)]);
    }
    for i in 0..rings - 1 {
        for j in 0..segments {
            let a = ring_vertex(i, j);
            let b = ring_vertex(i, j + 1);
            let c = ring_vertex(i + 1, j + 1);
            let d = ring_vertex(i + 1, j);
            faces.push([a, d, c]);
            faces.push([a, c, b]);
        }
    }

    let mesh = TriMesh::new(vertices, faces).expect("parametric mesh is well formed");
    (mesh, params)
}

/// Deterministic mesh for time `t`.
pub fn shape_at(shape: &DeformingShape, t: f64) -> TriMesh {
    shape_with_params(shape, t).0
}
