//! Closest-farthest-point correspondences and per-camera dynamic graphs.
//!
//! Consecutive frames of one camera are matched with an iterative scheme:
//! every source point proposes its nearest target points as candidates, a
//! boundary distance `l = m + ζσ` over the nearest-candidate distances splits
//! reliable from suspect matches, and the closest-or-farthest rule resolves
//! each candidate set. A smoothed displacement field moves the source toward
//! its matches between iterations. Chaining the per-pair correspondences
//! across a frame sequence yields key-node trajectories — the dynamic graph
//! that the synchronization classifier consumes.

mod correspond;
mod graph;
mod serialize;

pub use correspond::{
    correspondence_bound, icfp_match, icfp_register, icfp_step, select_correspondence,
    CorrespondenceMap, IcfpResult,
};
pub use graph::{build_dynamic_graph, DynamicGraph};
pub use serialize::{read_dynamic_graph, write_dynamic_graph, GraphFormatError};

use thiserror::Error;

use crate::geometry::GeometryError;

#[derive(Debug, Error)]
pub enum IcfpError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("empty distance list")]
    EmptyDistances,
    #[error("empty candidate list")]
    EmptyCandidates,
    #[error("degenerate target")]
    DegenerateTarget,
    #[error("insufficient frames: {retained} retained of {total}")]
    InsufficientFrames { retained: usize, total: usize },
    #[error("no persistent correspondences")]
    NoPersistentCorrespondences,
}

/// Parameters of the correspondence scheme.
#[derive(Debug, Clone)]
pub struct IcfpParams {
    /// Probability indicator ζ in the boundary distance `l = m + ζσ`.
    pub zeta: f64,
    pub max_iterations: usize,
    /// Stop when the mean residual changes by less than this (millimeters).
    pub convergence_tol: f64,
    /// Frames with fewer than this fraction of the median cloud size are
    /// skipped when building the dynamic graph.
    pub min_density_fraction: f64,
    /// Cap on surviving graph nodes; farthest-point subsampling applies when
    /// more chains survive.
    pub max_nodes: Option<usize>,
}

impl Default for IcfpParams {
    fn default() -> Self {
        Self {
            zeta: 1.7,
            max_iterations: 30,
            convergence_tol: 1e-3,
            min_density_fraction: 0.2,
            max_nodes: None,
        }
    }
}
