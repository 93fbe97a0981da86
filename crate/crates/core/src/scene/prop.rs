use nalgebra::Isometry3;
use serde::{Deserialize, Serialize};

use super::geometry::Vec3;
use super::SceneError;
use crate::rig::GripPose;

/// Collision primitive of the virtual nose, in the handle frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NosePrimitive {
    Sphere { center: Vec3, radius: f64 },
    Capsule { a: Vec3, b: Vec3, radius: f64 },
}

impl NosePrimitive {
    pub fn radius(&self) -> f64 {
        match *self {
            NosePrimitive::Sphere { radius, .. } | NosePrimitive::Capsule { radius, .. } => radius,
        }
    }

    fn contains(&self, p: &Vec3) -> bool {
        match self {
            NosePrimitive::Sphere { center, radius } => (p - center).norm() <= *radius + 1e-12,
            NosePrimitive::Capsule { a, b, radius } => {
                let ab = b - a;
                let s = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
                (p - (a + ab * s)).norm() <= *radius + 1e-12
            }
        }
    }
}

/// A prop whose held part (the handle) is physical and tracked, and whose
/// working end (the nose) exists only virtually.
///
/// The handle frame is the grip frame. Collisions are computed on the nose
/// from the tracked pose; `calibration_offset` only moves the displayed
/// replica of the handle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedProp {
    pub nose: Vec<NosePrimitive>,
    /// Nozzle tip, handle frame.
    pub tip: Vec3,
    /// Junction between physical handle and virtual nose, handle frame.
    pub nose_root: Vec3,
    /// Real-vs-virtual misregistration of the handle.
    pub calibration_offset: Isometry3<f64>,
    /// Bounding size of the physical handle (m).
    pub handle_size: f64,
    pub trigger: bool,
}

impl MixedProp {
    /// Putty gun: a nose barrel hanging 2-14 cm below the grip and a nozzle
    /// tip sphere at 16 cm.
    pub fn putty_gun() -> Self {
        Self {
            nose: vec![
                NosePrimitive::Capsule {
                    a: Vec3::new(0.0, 0.0, -0.02),
                    b: Vec3::new(0.0, 0.0, -0.13),
                    radius: 0.012,
                },
                NosePrimitive::Sphere {
                    center: Vec3::new(0.0, 0.0, -0.16),
                    radius: 0.004,
                },
            ],
            tip: Vec3::new(0.0, 0.0, -0.16),
            nose_root: Vec3::new(0.0, 0.0, -0.02),
            calibration_offset: Isometry3::identity(),
            handle_size: 0.12,
            trigger: false,
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.nose.is_empty() {
            return Err(SceneError::Invalid("prop nose has no primitives".into()));
        }
        if self.nose.iter().any(|p| !(p.radius() > 0.0)) {
            return Err(SceneError::Invalid("nose primitive radii must be positive".into()));
        }
        if !self.nose.iter().any(|p| p.contains(&self.tip)) {
            return Err(SceneError::Invalid("tip must lie on the virtual nose".into()));
        }
        Ok(())
    }

    pub fn tip_world(&self, pose: &GripPose) -> Vec3 {
        pose.transform_point(&self.tip)
    }

    /// Nose primitives placed in the world by `pose`.
    pub fn world_primitives(&self, pose: &GripPose) -> Vec<NosePrimitive> {
        self.nose
            .iter()
            .map(|p| match *p {
                NosePrimitive::Sphere { center, radius } => NosePrimitive::Sphere {
                    center: pose.transform_point(&center),
                    radius,
                },
                NosePrimitive::Capsule { a, b, radius } => NosePrimitive::Capsule {
                    a: pose.transform_point(&a),
                    b: pose.transform_point(&b),
                    radius,
                },
            })
            .collect()
    }
}

impl Default for MixedProp {
    fn default() -> Self {
        Self::putty_gun()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReplicaState {
    /// Where the physical handle is drawn (and shadowed).
    pub frame: Isometry3<f64>,
    /// Visible gap at the nose root between the handle replica and the nose (m).
    pub junction_gap: f64,
}

/// Frame of the handle replica and the resulting gap at the junction with the
/// virtual nose. Collision state never depends on this.
pub fn handle_replica_state(prop: &MixedProp, pose: &GripPose) -> ReplicaState {
    let tracked = pose.to_isometry();
    let frame = tracked * prop.calibration_offset;
    let nose_root = tracked.transform_point(&prop.nose_root.into());
    let replica_root = frame.transform_point(&prop.nose_root.into());
    ReplicaState {
        frame,
        junction_gap: (replica_root - nose_root).norm(),
    }
}
