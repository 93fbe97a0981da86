//! One fixed-rate loop merging collision response and device control.
//!
//! Phase order of a tick, never reordered:
//!
//! 1. velocity of the grip from the finite difference with the previous pose;
//! 2. swept tip test from the previous to the commanded tip, clamping (and
//!    sliding) the motion at the surface;
//! 3. nose contacts at the resolved pose;
//! 4. penalty wrench of those contacts;
//! 5. tensions for the negated wrench; if out of reach, the wrench is scaled
//!    radially to the capability boundary and the frame is flagged;
//! 6. putty extrusion when the trigger is held and the tip is within a tube
//!    radius of the surface;
//! 7. the frame.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

use super::HapticError;
use crate::rig::{build_structure_matrix, GripPose, RigConfig, StructureMatrix, Wrench};
use crate::scene::{
    contact_wrench, handle_replica_state, query_contacts, resolve_tip_motion, Contact, MixedProp,
    PenaltyGains, PuttySample, PuttySettings, PuttyTrail, SeamPath, TriMesh, Vec3,
};
use crate::tension::{feasible_scale, solve_tensions, TensionBounds, TensionError, Tensions};

pub const DEFAULT_DT_NS: u64 = 1_000_000;

/// Outcome of the tension phase, as carried on the wire.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameStatus {
    NotRun,
    Optimal,
    /// Requested wrench was out of reach and has been scaled down.
    Scaled,
    /// No bounded tensions at all, or the solver broke down.
    Failed,
}

impl FrameStatus {
    pub fn code(self) -> u8 {
        match self {
            FrameStatus::NotRun => 0,
            FrameStatus::Optimal => 1,
            FrameStatus::Scaled => 2,
            FrameStatus::Failed => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => FrameStatus::NotRun,
            1 => FrameStatus::Optimal,
            2 => FrameStatus::Scaled,
            3 => FrameStatus::Failed,
            _ => return None,
        })
    }
}

/// One tick of the loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HapticFrame {
    pub tick: u64,
    /// `tick * dt`, s.
    pub sim_time: f64,
    /// Grip pose after tip clamping.
    pub pose: GripPose,
    /// `[linear (m/s); angular (rad/s)]`
    pub velocity: Vector6<f64>,
    pub contacts: Vec<Contact>,
    /// Swept-tip impact that clamped this tick's motion.
    pub sweep: Option<Contact>,
    /// Penalty wrench of the contacts on the grip.
    pub wrench: Wrench,
    /// Fraction of the reaction actually rendered, 1 unless scaled.
    pub wrench_scale: f64,
    /// Present when the solver ran and produced usable tensions.
    pub tensions: Option<Tensions>,
    pub status: FrameStatus,
    pub infeasible: bool,
    pub trigger: bool,
    pub bead_delta: Vec<PuttySample>,
    pub junction_gap: f64,
    /// Wall-clock cost of the step (s); not part of the log.
    #[serde(skip)]
    pub step_compute_time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Tick length, integer nanoseconds so `tick * dt` is exact.
    pub dt_ns: u64,
    pub gains: PenaltyGains,
    pub putty: PuttySettings,
    /// Let a clamped tip slide along the surface.
    pub slide: bool,
}

impl SimParams {
    pub fn dt(&self) -> f64 {
        self.dt_ns as f64 * 1e-9
    }

    pub fn sim_time(&self, tick: u64) -> f64 {
        (tick as u128 * self.dt_ns as u128) as f64 * 1e-9
    }

    pub fn validate(&self) -> Result<(), HapticError> {
        if self.dt_ns == 0 {
            return Err(HapticError::Config("dt must be positive".into()));
        }
        if !(self.gains.stiffness > 0.0) || !(self.gains.damping >= 0.0) {
            return Err(HapticError::Config(
                "stiffness must be > 0 and damping >= 0".into(),
            ));
        }
        let p = &self.putty;
        if !(p.radius > 0.0) || !(p.min_spacing > 0.0) || p.ring_segments < 3 {
            return Err(HapticError::Config(
                "putty radius and spacing must be > 0, ring_segments >= 3".into(),
            ));
        }
        Ok(())
    }
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt_ns: DEFAULT_DT_NS,
            gains: PenaltyGains::default(),
            putty: PuttySettings::default(),
            slide: true,
        }
    }
}

/// Immutable environment shared between the loop and its readers.
#[derive(Clone, Debug)]
pub struct Scene {
    pub mesh: Arc<TriMesh>,
    pub seam: Option<SeamPath>,
    pub prop: MixedProp,
}

impl Scene {
    pub fn new(mesh: TriMesh, seam: Option<SeamPath>, prop: MixedProp) -> Self {
        Self {
            mesh: Arc::new(mesh),
            seam,
            prop,
        }
    }
}

struct Previous {
    pose: GripPose,
    tip: Vec3,
}

/// Loop state: owned by one thread, advanced one tick per [`Simulation::step`].
pub struct Simulation {
    rig: RigConfig,
    bounds: TensionBounds,
    scene: Scene,
    params: SimParams,
    next_tick: u64,
    previous: Option<Previous>,
    trail: PuttyTrail,
}

impl Simulation {
    pub fn new(rig: RigConfig, scene: Scene, params: SimParams) -> Result<Self, HapticError> {
        params.validate()?;
        rig.validate()?;
        scene.prop.validate()?;
        Ok(Self {
            bounds: TensionBounds::of(&rig),
            rig,
            trail: PuttyTrail::new(params.putty),
            scene,
            params,
            next_tick: 0,
            previous: None,
        })
    }

    pub fn rig(&self) -> &RigConfig {
        &self.rig
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn trail(&self) -> &PuttyTrail {
        &self.trail
    }

    pub fn next_tick(&self) -> u64 {
        self.next_tick
    }

    /// Pose the loop ended the last tick at.
    pub fn current_pose(&self) -> Option<GripPose> {
        self.previous.as_ref().map(|p| p.pose)
    }

    pub fn step(&mut self, commanded: &GripPose, trigger: bool) -> Result<HapticFrame, HapticError> {
        let started = Instant::now();
        let tick = self.next_tick;
        let dt = self.params.dt();
        let mesh = &*self.scene.mesh;
        let prop = &self.scene.prop;

        // (2) swept tip; the grip follows its tip rigidly
        let target_tip = prop.tip_world(commanded);
        let (pose, tip, sweep) = match &self.previous {
            None => (*commanded, target_tip, None),
            Some(prev) => {
                let motion = resolve_tip_motion(mesh, &prev.tip, &target_tip, self.params.slide);
                let shift = motion.position - target_tip;
                let pose = GripPose::from_parts(commanded.position + shift, commanded.orientation);
                (pose, motion.position, motion.hit)
            }
        };

        // (1) velocity of the pose actually reached
        let velocity = match &self.previous {
            None => Vector6::zeros(),
            Some(prev) => {
                let v = (pose.position - prev.pose.position) / dt;
                let w = (pose.orientation * prev.pose.orientation.inverse()).scaled_axis() / dt;
                Vector6::new(v.x, v.y, v.z, w.x, w.y, w.z)
            }
        };

        // (3), (4)
        let contacts = query_contacts(mesh, prop, &pose);
        let wrench = contact_wrench(&contacts, &pose, &velocity, &self.params.gains);

        // (5)
        let a = build_structure_matrix(&self.rig, &pose)?;
        let (tensions, status, wrench_scale) = render_reaction(&a, self.bounds, &wrench);

        // (6)
        let near = mesh.closest_point(&tip).distance <= self.params.putty.radius;
        let sim_time = self.params.sim_time(tick);
        let bead_delta: Vec<PuttySample> = self
            .trail
            .extrude(tip, sim_time, trigger && near)
            .into_iter()
            .collect();

        let junction_gap = handle_replica_state(prop, &pose).junction_gap;
        self.previous = Some(Previous { pose, tip });
        self.next_tick += 1;

        // (7)
        Ok(HapticFrame {
            tick,
            sim_time,
            pose,
            velocity,
            contacts,
            sweep,
            wrench,
            wrench_scale,
            tensions,
            infeasible: status != FrameStatus::Optimal,
            status,
            trigger,
            bead_delta,
            junction_gap,
            step_compute_time: started.elapsed().as_secs_f64(),
        })
    }
}

/// Tensions making the device exert `-wrench`, scaled toward zero if needed.
fn render_reaction(
    a: &StructureMatrix,
    bounds: TensionBounds,
    wrench: &Wrench,
) -> (Option<Tensions>, FrameStatus, f64) {
    let target = -wrench;
    match solve_tensions(a, &target, bounds) {
        Ok(rep) if rep.is_optimal() => (Some(rep.tensions), FrameStatus::Optimal, 1.0),
        Ok(_) => match scale_to_boundary(a, bounds, &target) {
            Ok(Some((t, s))) => (Some(t), FrameStatus::Scaled, s),
            Ok(None) | Err(_) => (None, FrameStatus::Failed, 0.0),
        },
        Err(e) => {
            log::warn!("tension solve failed: {e}");
            (None, FrameStatus::Failed, 0.0)
        }
    }
}

/// Largest feasible `s * target` with `s < 1`, and its tensions.
fn scale_to_boundary(
    a: &StructureMatrix,
    bounds: TensionBounds,
    target: &Wrench,
) -> Result<Option<(Tensions, f64)>, TensionError> {
    let Some(cap) = feasible_scale(a, bounds, target)? else {
        return Ok(None);
    };
    // the LP boundary can sit a hair outside what the QP accepts
    for s in [cap, cap * (1.0 - 1e-9), cap * (1.0 - 1e-6)] {
        let rep = solve_tensions(a, &(target * s), bounds)?;
        if rep.is_optimal() {
            return Ok(Some((rep.tensions, s)));
        }
    }
    let (mut lo, mut hi) = (0.0, cap);
    let mut best = solve_tensions(a, &Wrench::zeros(), bounds)?;
    if !best.is_optimal() {
        return Ok(None);
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let rep = solve_tensions(a, &(target * mid), bounds)?;
        if rep.is_optimal() {
            lo = mid;
            best = rep;
        } else {
            hi = mid;
        }
    }
    Ok(Some((best.tensions, lo)))
}
