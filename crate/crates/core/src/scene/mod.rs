//! The virtual environment: car-body mesh, seam polylines, the mixed prop,
//! collision queries, penalty wrench, putty extrusion, seam metrics and
//! planar shadows.

use std::path::Path;

use thiserror::Error;

mod collide;
pub mod geometry;
pub mod mesh;
mod prop;
pub mod putty;
pub mod shadow;
pub mod synth;

pub use collide::{
    contact_wrench, query_contacts, resolve_tip_motion, sweep_tip, Contact, PenaltyGains,
    TipMotion, SURFACE_OFFSET,
};
pub use geometry::Vec3;
pub use mesh::{LoadOptions, TriMesh};
pub use prop::{handle_replica_state, MixedProp, NosePrimitive, ReplicaState};
pub use putty::{
    seam_metrics, seam_metrics_all, PuttyBead, PuttySample, PuttySettings, PuttyTrail, SeamMetrics,
    SeamPath,
};
pub use shadow::{project_shadow, Plane};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("{}parse error{}: {message}", path.as_ref().map(|p| format!("{p}: ")).unwrap_or_default(), line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    ParseAt {
        path: Option<String>,
        line: Option<usize>,
        message: String,
    },
    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },
    #[error("mesh has no usable triangles")]
    EmptyMesh,
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("light direction is parallel to the shadow plane")]
    DegenerateLight,
    #[error("invalid scene input: {0}")]
    Invalid(String),
}

impl SceneError {
    /// Attaches a file path to parse errors.
    pub fn with_path(self, path: &Path) -> Self {
        match self {
            SceneError::Parse { line, message } => SceneError::ParseAt {
                path: Some(path.display().to_string()),
                line,
                message,
            },
            other => other,
        }
    }
}
