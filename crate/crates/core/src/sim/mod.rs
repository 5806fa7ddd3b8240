//! Synthetic asynchronous multi-camera capture sessions with ground truth.
//!
//! A parametric foot-like shape deforms periodically; virtual cameras sample
//! partial views of it at drifting capture times while their clocks report
//! nominal timestamps. The recorded truth (true sample times and per-frame
//! offsets to the reference camera) drives verification end to end.

mod camera;
mod session;
mod shape;

pub use camera::{default_rig, render_view, VirtualCamera};
pub use session::{
    base_template, export_session, load_session, simulate_session, CaptureTruth, FrameTruth,
    Session, SessionConfig,
};
pub use shape::{shape_at, shape_with_params, DeformingShape};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    MeshIo(#[from] crate::geometry::MeshIoError),
    #[error("manifest line {line}: {detail}")]
    Manifest { line: usize, detail: String },
    #[error("unsupported truth manifest version {found}")]
    ManifestVersion { found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
