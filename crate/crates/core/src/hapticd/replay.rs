//! Pose sources and deterministic scenario replay.

use serde::{Deserialize, Serialize};

use super::log::FrameLog;
use super::script::ScenarioScript;
use super::sim::{Scene, SimParams, Simulation};
use super::HapticError;
use crate::rig::{GripPose, RigConfig};
use crate::scene::{seam_metrics_all, SeamMetrics};

/// Where the loop gets its commanded pose each tick.
pub trait PoseSource {
    /// Command for `tick`, or `None` to hold the previous one.
    fn command(&mut self, tick: u64, sim_time: f64) -> Option<(GripPose, bool)>;
}

pub struct ConstantSource {
    pub pose: GripPose,
    pub trigger: bool,
}

impl PoseSource for ConstantSource {
    fn command(&mut self, _: u64, _: f64) -> Option<(GripPose, bool)> {
        Some((self.pose, self.trigger))
    }
}

pub struct ScriptedSource<'a> {
    pub script: &'a ScenarioScript,
}

impl PoseSource for ScriptedSource<'_> {
    fn command(&mut self, _: u64, sim_time: f64) -> Option<(GripPose, bool)> {
        self.script.sample(sim_time)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub ticks: u64,
    pub duration: f64,
    /// Largest contact force magnitude (N).
    pub max_force: f64,
    /// Largest contact torque magnitude (N·m).
    pub max_torque: f64,
    /// Ticks whose reaction had to be scaled or could not be rendered.
    pub infeasible_ticks: u64,
    pub bead_count: usize,
    pub bead_samples: usize,
    pub coverage: f64,
    pub max_deviation: f64,
    pub slip_events: usize,
    /// SHA-256 of the binary frame log, hex.
    pub digest: String,
}

pub struct ScenarioRun {
    pub log: FrameLog,
    pub metrics: Option<SeamMetrics>,
    pub summary: ScenarioSummary,
}

/// Runs `script` tick by tick at `params.dt_ns`, single-threaded and without
/// reading the clock except to time steps.
pub fn run_scenario(
    script: &ScenarioScript,
    scene: &Scene,
    rig: &RigConfig,
    params: &SimParams,
) -> Result<ScenarioRun, HapticError> {
    let mut sim = Simulation::new(rig.clone(), scene.clone(), *params)?;
    let mut source = ScriptedSource { script };
    let mut log = FrameLog::new();
    let ticks = script.tick_count(params.dt_ns);
    let mut last = None;
    for tick in 0..ticks {
        let t = params.sim_time(tick);
        if let Some(cmd) = source.command(tick, t) {
            last = Some(cmd);
        }
        let (pose, trigger) = last.expect("non-empty script yields a command");
        log.push(sim.step(&pose, trigger)?);
    }

    let metrics = scene
        .seam
        .as_ref()
        .map(|seam| seam_metrics_all(sim.trail().beads(), seam));
    let summary = ScenarioSummary {
        ticks,
        duration: params.sim_time(ticks),
        max_force: log
            .frames
            .iter()
            .map(|f| f.wrench.fixed_rows::<3>(0).norm())
            .fold(0.0, f64::max),
        max_torque: log
            .frames
            .iter()
            .map(|f| f.wrench.fixed_rows::<3>(3).norm())
            .fold(0.0, f64::max),
        infeasible_ticks: log.frames.iter().filter(|f| f.infeasible).count() as u64,
        bead_count: sim.trail().beads().len(),
        bead_samples: sim.trail().sample_count(),
        coverage: metrics.map_or(0.0, |m| m.coverage),
        max_deviation: metrics.map_or(0.0, |m| m.max_deviation),
        slip_events: metrics.map_or(0, |m| m.slip_events),
        digest: log.digest_hex(),
    };
    Ok(ScenarioRun {
        log,
        metrics,
        summary,
    })
}
