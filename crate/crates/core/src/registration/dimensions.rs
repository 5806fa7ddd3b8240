//! Foot dimension measurements on registered meshes.

use super::RegistrationError;
use crate::geometry::TriMesh;

/// Which axes carry the anatomical directions. Defaults: length along x,
/// width along y (heel at the low-x end).
#[derive(Debug, Clone, Copy)]
pub struct AxisFrame {
    pub length_axis: usize,
    pub width_axis: usize,
}

impl Default for AxisFrame {
    fn default() -> Self {
        Self { length_axis: 0, width_axis: 1 }
    }
}

/// Foot length, overall width, and ball width in millimeters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootDimensions {
    pub length: f64,
    pub width: f64,
    pub ball_width: f64,
}

/// The ball region spans this band of the foot length, measured from the
/// heel. The anatomical definition follows an external measurement standard;
/// this fixed band is a stand-in and is labeled as such in reports.
pub const BALL_BAND: (f64, f64) = (0.60, 0.75);

/// Measures extents on a mesh in the canonical axis frame: length along the
/// length axis, width as the full extent along the width axis, and ball
/// width as the width extent restricted to the ball band.
pub fn foot_dimensions(mesh: &TriMesh, frame: AxisFrame) -> Result<FootDimensions, RegistrationError> {
    if mesh.vertex_count() == 0 {
        return Err(RegistrationError::EmptyMesh);
    }
    let coord = |axis: usize| {
        mesh.vertices().iter().map(move |p| p.coord(axis))
    };
    let min_l = coord(frame.length_axis).fold(f64::INFINITY, f64::min);
    let max_l = coord(frame.length_axis).fold(f64::NEG_INFINITY, f64::max);
    let length = max_l - min_l;
    let min_w = coord(frame.width_axis).fold(f64::INFINITY, f64::min);
    let max_w = coord(frame.width_axis).fold(f64::NEG_INFINITY, f64::max);
    let width = max_w - min_w;

    let band_lo = min_l + BALL_BAND.0 * length;
    let band_hi = min_l + BALL_BAND.1 * length;
    let mut ball_lo = f64::INFINITY;
    let mut ball_hi = f64::NEG_INFINITY;
    for p in mesh.vertices() {
        let l = p.coord(frame.length_axis);
        if l >= band_lo && l <= band_hi {
            let w = p.coord(frame.width_axis);
            ball_lo = ball_lo.min(w);
            ball_hi = ball_hi.max(w);
        }
    }
    let ball_width = if ball_hi >= ball_lo { ball_hi - ball_lo } else { 0.0 };
    Ok(FootDimensions { length, width, ball_width })
}

/// Max-minus-min of each dimension over a sequence, with the ratios to the
/// mean length that dimension tables report against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionVariation {
    pub delta_length: f64,
    pub delta_width: f64,
    pub delta_ball_width: f64,
    pub mean_length: f64,
}

impl DimensionVariation {
    pub fn length_ratio(&self) -> f64 {
        self.delta_length / self.mean_length
    }

    pub fn width_ratio(&self) -> f64 {
        self.delta_width / self.mean_length
    }

    pub fn ball_width_ratio(&self) -> f64 {
        self.delta_ball_width / self.mean_length
    }
}

/// Per-dimension max − min over a sequence of measured meshes.
pub fn dimension_variation(sequence: &[FootDimensions]) -> Result<DimensionVariation, RegistrationError> {
    if sequence.len() < 2 {
        return Err(RegistrationError::EmptyMesh);
    }
    let span = |select: fn(&FootDimensions) -> f64| {
        let lo = sequence.iter().map(select).fold(f64::INFINITY, f64::min);
        let hi = sequence.iter().map(select).fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    let mean_length =
        sequence.iter().map(|d| d.length).sum::<f64>() / sequence.len() as f64;
    Ok(DimensionVariation {
        delta_length: span(|d| d.length),
        delta_width: span(|d| d.width),
        delta_ball_width: span(|d| d.ball_width),
        mean_length,
    })
}
