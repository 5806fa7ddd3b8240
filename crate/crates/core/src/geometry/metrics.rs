//! Cloud-to-cloud distance metrics.

use super::{build_nn_index, GeometryError, NnIndex, PointCloud};

/// Mean closest-point geometry distance from `a` to `b`, in millimeters.
///
/// Directional: averages, over the points of `a`, the Euclidean distance to
/// each point's nearest neighbor in `b`. Use [`cpgd_sym`] for the symmetric
/// variant.
pub fn cpgd(a: &PointCloud, b: &PointCloud) -> Result<f64, GeometryError> {
    if a.is_empty() {
        return Err(GeometryError::EmptyCloud);
    }
    let index = build_nn_index(b)?;
    Ok(cpgd_to_index(a, &index))
}

/// Directional CPGD against a prebuilt index. `a` must be non-empty.
pub fn cpgd_to_index(a: &PointCloud, b: &NnIndex) -> f64 {
    let mut sum = 0.0;
    for p in a.points() {
        sum += b.nearest(*p).1;
    }
    sum / a.len() as f64
}

/// Symmetric CPGD: `(cpgd(a, b) + cpgd(b, a)) / 2`.
pub fn cpgd_sym(a: &PointCloud, b: &PointCloud) -> Result<f64, GeometryError> {
    Ok((cpgd(a, b)? + cpgd(b, a)?) / 2.0)
}

/// Root mean square of a non-empty list of distances.
pub fn rmse(values: &[f64]) -> Result<f64, GeometryError> {
    if values.is_empty() {
        return Err(GeometryError::EmptyList);
    }
    let sum_sq: f64 = values.iter().map(|v| v * v).sum();
    Ok((sum_sq / values.len() as f64).sqrt())
}
