//! The haptic loop and everything around it: scenario replay, the frame log,
//! the datagram protocol, the browser bridge and the real-time service.
//!
//! Dynamics and haptic control run in one fixed-rate loop
//! ([`Simulation::step`]); the phase order is documented in [`sim`].

use thiserror::Error;

pub mod bridge;
pub mod config;
pub mod log;
pub mod protocol;
pub mod replay;
pub mod script;
pub mod service;
pub mod sim;

pub use config::ServiceConfig;
pub use log::FrameLog;
pub use protocol::{CommandPacket, ProtocolError, StatePacket, WireContact};
pub use replay::{run_scenario, ConstantSource, PoseSource, ScenarioRun, ScenarioSummary, ScriptedSource};
pub use script::{seam_follow_script, Interpolation, Keyframe, ScenarioScript, ScriptError, SeamFollowPlan};
pub use service::{serve, serve_with, ServiceHandle, ServiceOptions, StatsSnapshot};
pub use sim::{FrameStatus, HapticFrame, Scene, SimParams, Simulation, DEFAULT_DT_NS};

use crate::rig::RigError;
use crate::scene::SceneError;

#[derive(Debug, Error)]
pub enum HapticError {
    #[error(transparent)]
    Rig(#[from] RigError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Script(#[from] ScriptError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot bind {addr}: {message}")]
    Bind { addr: String, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("frame log: {0}")]
    Log(String),
}
