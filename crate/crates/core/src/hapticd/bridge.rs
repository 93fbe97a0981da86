//! JSON messages of the browser bridge (one message per websocket text
//! frame). The frame message carries the state-packet fields at full
//! precision plus render helpers; see `docs/bridge.md`.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::protocol::CommandPacket;
use super::sim::{HapticFrame, Scene};
use crate::rig::{GripPose, RigConfig, STRING_COUNT};
use crate::scene::{handle_replica_state, project_shadow, NosePrimitive, Plane, Vec3};

/// Direction the shadow-casting light travels.
pub fn default_light() -> Vec3 {
    Vec3::new(0.3, 0.2, -1.0).normalize()
}

/// Ground plane just below the car body.
pub fn default_ground(scene: &Scene) -> Plane {
    Plane::ground(scene.mesh.bounds().min.z - 0.01)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactMsg {
    pub point: [f64; 3],
    pub normal: [f64; 3],
    pub depth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StringMsg {
    pub motor: [f64; 3],
    pub attachment: [f64; 3],
    pub tension: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowMsg {
    /// Plane `normal · x = offset`.
    pub normal: [f64; 3],
    pub offset: f64,
    /// Shadows of nose-primitive centers/endpoints, then tip, then the
    /// handle replica origin.
    pub points: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMsg {
    pub tick: u64,
    pub sim_time: f64,
    pub position: [f64; 3],
    /// w, x, y, z
    pub quaternion: [f64; 4],
    pub wrench: [f64; 6],
    pub tensions: [f64; 8],
    pub status: u8,
    pub trigger: bool,
    pub contacts: Vec<ContactMsg>,
    pub bead_delta: Vec<[f64; 3]>,
    pub infeasible: bool,
    pub wrench_scale: f64,
    pub junction_gap: f64,
    pub strings: Vec<StringMsg>,
    pub shadow: Option<ShadowMsg>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneMsg {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
    pub seam: Vec<[f64; 3]>,
    pub slip_tolerance: Option<f64>,
    pub nose: Vec<NosePrimitive>,
    pub tip: [f64; 3],
    pub handle_size: f64,
    pub motors: Vec<[f64; 3]>,
    pub tension_min: f64,
    pub tension_max: f64,
    pub putty_radius: f64,
    pub light: [f64; 3],
    pub ground: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Scene(Box<SceneMsg>),
    Frame(Box<FrameMsg>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Command {
        seq: u32,
        position: [f64; 3],
        /// w, x, y, z
        quaternion: [f64; 4],
        trigger: bool,
    },
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

pub fn scene_message(scene: &Scene, rig: &RigConfig, putty_radius: f64) -> ServerMessage {
    let ground = default_ground(scene);
    ServerMessage::Scene(Box::new(SceneMsg {
        vertices: scene.mesh.vertices().iter().map(arr).collect(),
        triangles: scene.mesh.triangles().to_vec(),
        seam: scene
            .seam
            .as_ref()
            .map(|s| s.points().iter().map(arr).collect())
            .unwrap_or_default(),
        slip_tolerance: scene.seam.as_ref().map(|s| s.tolerance()),
        nose: scene.prop.nose.clone(),
        tip: arr(&scene.prop.tip),
        handle_size: scene.prop.handle_size,
        motors: (0..STRING_COUNT).map(|i| arr(&rig.motor_of(i))).collect(),
        tension_min: rig.tension_min,
        tension_max: rig.tension_max,
        putty_radius,
        light: arr(&default_light()),
        ground: [ground.normal.x, ground.normal.y, ground.normal.z, ground.offset],
    }))
}

pub fn frame_message(frame: &HapticFrame, scene: &Scene, rig: &RigConfig) -> ServerMessage {
    let pose = &frame.pose;
    let attachments = rig.attachment_points(pose);
    let strings = (0..STRING_COUNT)
        .map(|i| StringMsg {
            motor: arr(&rig.motor_of(i)),
            attachment: arr(&attachments[i]),
            tension: frame.tensions.map(|t| t.0[i]),
        })
        .collect();
    let ground = default_ground(scene);
    let mut casters: Vec<Vec3> = Vec::new();
    for p in scene.prop.world_primitives(pose) {
        match p {
            NosePrimitive::Sphere { center, .. } => casters.push(center),
            NosePrimitive::Capsule { a, b, .. } => casters.extend([a, b]),
        }
    }
    casters.push(scene.prop.tip_world(pose));
    casters.push(handle_replica_state(&scene.prop, pose).frame.translation.vector);
    let shadow = project_shadow(&casters, &default_light(), &ground)
        .ok()
        .map(|pts| ShadowMsg {
            normal: arr(&ground.normal),
            offset: ground.offset,
            points: pts.iter().map(arr).collect(),
        });
    ServerMessage::Frame(Box::new(FrameMsg {
        tick: frame.tick,
        sim_time: frame.sim_time,
        position: arr(&pose.position),
        quaternion: pose.quaternion_wxyz(),
        wrench: frame.wrench.into(),
        tensions: frame.tensions.map_or([0.0; 8], |t| t.0),
        status: frame.status.code(),
        trigger: frame.trigger,
        contacts: frame
            .contacts
            .iter()
            .map(|c| ContactMsg {
                point: arr(&c.point),
                normal: arr(&c.normal),
                depth: c.depth,
            })
            .collect(),
        bead_delta: frame.bead_delta.iter().map(|s| arr(&s.position)).collect(),
        infeasible: frame.infeasible,
        wrench_scale: frame.wrench_scale,
        junction_gap: frame.junction_gap,
        strings,
        shadow,
    }))
}

impl ClientMessage {
    pub fn parse(text: &str) -> Result<Self, String> {
        let msg: ClientMessage = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let ClientMessage::Command {
            position,
            quaternion,
            ..
        } = &msg;
        if !position.iter().chain(quaternion).all(|x| x.is_finite()) {
            return Err("non-finite number".into());
        }
        if quaternion.iter().map(|x| x * x).sum::<f64>() < 1e-12 {
            return Err("zero quaternion".into());
        }
        Ok(msg)
    }

    pub fn into_command(self) -> CommandPacket {
        let ClientMessage::Command {
            seq,
            position,
            quaternion,
            trigger,
        } = self;
        CommandPacket {
            seq,
            position,
            quaternion,
            trigger,
        }
    }
}

impl CommandPacket {
    /// Commanded pose; the quaternion is normalized here.
    pub fn pose(&self) -> GripPose {
        let [w, x, y, z] = self.quaternion;
        GripPose::from_parts(
            Vector3::from(self.position),
            UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)),
        )
    }
}
