//! Desk-scale simulator of a prop-based stringed haptic workbench.
//!
//! The crate models an 8-string, 6-dof tension-based force-feedback rig, the
//! mixed real/virtual putty-gun prop, mesh collision and penalty rendering, the
//! fixed-rate haptic loop, and the putty-application task on a car body.
//!
//! - [`rig`]: motor/attachment geometry, string lengths, structure matrix.
//! - [`tension`]: bounded tension distribution and wrench capability.
//! - [`kinematics`]: grip pose from measured string lengths.
//! - [`workspace`]: wrench-closure, conditioning and capability maps.
//! - [`scene`]: car-body mesh, mixed prop, contacts, putty, seams, shadows.
//! - [`hapticd`]: the haptic loop, scenario replay, frame log and network service.

pub mod assets;
pub mod cli;
pub mod hapticd;
pub mod kinematics;
mod lp;
pub mod rig;
pub mod scene;
pub mod tension;
pub mod workspace;

pub use rig::{GripPose, RigConfig, StructureMatrix, Wrench};
pub use tension::{SolveStatus, TensionBounds, TensionSolveReport, Tensions};
