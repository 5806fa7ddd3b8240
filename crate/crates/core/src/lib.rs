//! Synchronization and registration of asynchronous multi-camera 4D captures.
//!
//! The crate is organized as a pipeline over time series of partial point-cloud
//! scans of a deforming object:
//!
//! 1. [`geometry`] — point clouds, triangle meshes, exact nearest-neighbor
//!    search, cloud distance metrics, and PLY/OBJ file I/O.
//! 2. [`icfp`] — closest-farthest-point correspondences between consecutive
//!    frames of one camera and construction of per-camera dynamic graphs
//!    (key-node trajectories).
//! 3. [`autodiff`] — a tape-based reverse-mode gradient engine over dense
//!    matrices, used by the classifier below.
//! 4. [`adgc`] — the attention-enhanced graph-convolutional LSTM classifier
//!    and its training loop.
//! 5. [`sync`] — pairwise and hierarchical camera synchronization, merging,
//!    baselines, and the leave-one-camera-out evaluation protocol.
//! 6. [`registration`] — template-to-scan non-rigid registration by sparse
//!    linear least squares, plus foot dimension measurements.
//! 7. [`sim`] — a synthetic capture simulator that generates asynchronous
//!    multi-camera sessions with ground truth.

pub mod adgc;
pub mod autodiff;
pub mod geometry;
pub mod icfp;
pub mod registration;
pub mod sim;
pub mod sync;
