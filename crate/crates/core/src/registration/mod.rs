//! Template-to-scan non-rigid registration.
//!
//! Per-vertex 4×3 affine transforms minimize a distance-plus-stiffness
//! energy `‖[αM⊗G; WD]X − [0; WU]‖²_F` solved through its normal equations
//! with a preconditioned conjugate-gradient iteration. The outer loop
//! alternates closest-farthest-point correspondences with solves over a
//! decreasing stiffness schedule. A curvature block is reserved in the
//! system but off by default.

mod blocks;
mod dimensions;
mod register;
mod solve;

pub use blocks::{build_blocks, stiffness_apply, CurvatureBlock, SystemBlocks};
pub use dimensions::{dimension_variation, foot_dimensions, AxisFrame, DimensionVariation, FootDimensions};
pub use register::{register_template, RegistrationReport};
pub use solve::{assemble_and_solve, energy, TransformStack};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegistrationError {
    #[error("correspondence references target point {index} of {limit}")]
    CorrespondenceOutOfRange { index: usize, limit: usize },
    #[error("correspondence references vertex {index} of {limit}")]
    VertexOutOfRange { index: usize, limit: usize },
    #[error("rank deficient")]
    RankDeficient,
    #[error("conjugate gradient stalled after {iterations} iterations (residual {residual:.3e})")]
    SolverStalled { iterations: usize, residual: f64 },
    #[error("alpha schedule must be positive and decreasing, got {0:?}")]
    BadSchedule(Vec<f64>),
    #[error("curvature weight is {beta} but no curvature block is defined")]
    MissingCurvature { beta: f64 },
    #[error("empty mesh")]
    EmptyMesh,
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Icfp(#[from] crate::icfp::IcfpError),
}

/// Parameters for the registration energy and outer loop.
#[derive(Debug, Clone)]
pub struct RegistrationParams {
    /// Decreasing stiffness weights; one outer stage per value.
    pub alpha_schedule: Vec<f64>,
    /// Skew/rotation-versus-translation weight in `G = diag(1, 1, 1, γ)`.
    pub gamma: f64,
    /// Curvature term weight; the term stays disabled at 0.
    pub beta: f64,
    /// Correspondence/solve alternations per stiffness value.
    pub inner_iterations: usize,
    /// Stop an inner loop once the mean vertex movement falls below this
    /// (millimeters).
    pub inner_tol_mm: f64,
    /// Probability indicator for the correspondence bound.
    pub zeta: f64,
}

impl Default for RegistrationParams {
    fn default() -> Self {
        Self {
            alpha_schedule: vec![50.0, 20.0, 5.0, 2.0, 0.8],
            gamma: 1.0,
            beta: 0.0,
            inner_iterations: 3,
            inner_tol_mm: 0.01,
            zeta: 1.7,
        }
    }
}

impl RegistrationParams {
    pub fn validate(&self) -> Result<(), RegistrationError> {
        let ok = !self.alpha_schedule.is_empty()
            && self.alpha_schedule.iter().all(|&a| a > 0.0)
            && self.alpha_schedule.windows(2).all(|w| w[0] > w[1])
            && self.gamma > 0.0;
        if !ok {
            return Err(RegistrationError::BadSchedule(self.alpha_schedule.clone()));
        }
        if self.beta != 0.0 {
            return Err(RegistrationError::MissingCurvature { beta: self.beta });
        }
        Ok(())
    }
}
