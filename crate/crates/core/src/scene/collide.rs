//! Contacts between the virtual nose and the car body, the swept tip test,
//! and penalty rendering.

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

use super::geometry::Vec3;
use super::mesh::TriMesh;
use super::prop::{MixedProp, NosePrimitive};
use crate::rig::{GripPose, Wrench};

/// Distance kept between a clamped tip and the surface it hit (m).
pub const SURFACE_OFFSET: f64 = 1e-7;
/// Points deeper than this below the surface count as inside (m).
const INSIDE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub point: Vec3,
    /// Unit, pointing out of the mesh.
    pub normal: Vec3,
    /// Penetration depth (m), >= 0.
    pub depth: f64,
    /// Index of the nose primitive, or `usize::MAX` for the swept tip.
    pub primitive: usize,
    /// Fraction of the tick at which a swept contact occurred.
    pub time_of_impact: Option<f64>,
}

pub const SWEEP_PRIMITIVE: usize = usize::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyGains {
    /// N/m
    pub stiffness: f64,
    /// N·s/m
    pub damping: f64,
}

impl Default for PenaltyGains {
    fn default() -> Self {
        Self {
            stiffness: 2000.0,
            damping: 5.0,
        }
    }
}

fn sphere_contact(mesh: &TriMesh, center: &Vec3, radius: f64, primitive: usize) -> Option<Contact> {
    let (sd, cp, normal) = mesh.signed_distance(center);
    (sd < radius).then(|| Contact {
        point: cp.point,
        normal,
        depth: radius - sd,
        primitive,
        time_of_impact: None,
    })
}

fn capsule_contact(
    mesh: &TriMesh,
    a: &Vec3,
    b: &Vec3,
    radius: f64,
    primitive: usize,
) -> Option<Contact> {
    let closest = mesh.segment_closest(a, b);
    if closest.distance >= radius {
        return None;
    }
    let axis = b - a;
    let at = |s: f64| a + axis * s;
    let (sd_a, _, _) = mesh.signed_distance(a);
    if closest.distance > 1e-12 && sd_a > 0.0 {
        // axis does not cross the surface and starts outside: the closest
        // approach is also the deepest point
        let x = at(closest.s);
        return Some(Contact {
            point: closest.point,
            normal: (x - closest.point) / closest.distance,
            depth: radius - closest.distance,
            primitive,
            time_of_impact: None,
        });
    }
    // the axis reaches inside: minimize signed distance along it
    const SAMPLES: usize = 32;
    let f = |s: f64| mesh.signed_distance(&at(s)).0;
    let (mut k_best, mut f_best) = (0usize, f64::INFINITY);
    for k in 0..=SAMPLES {
        let v = f(k as f64 / SAMPLES as f64);
        if v < f_best {
            k_best = k;
            f_best = v;
        }
    }
    let mut lo = (k_best.saturating_sub(1)) as f64 / SAMPLES as f64;
    let mut hi = ((k_best + 1).min(SAMPLES)) as f64 / SAMPLES as f64;
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..48 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if f(m1) <= f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let s = {
        let mid = 0.5 * (lo + hi);
        let s0 = k_best as f64 / SAMPLES as f64;
        if f(mid) <= f(s0) {
            mid
        } else {
            s0
        }
    };
    let (sd, cp, normal) = mesh.signed_distance(&at(s));
    (sd < radius).then(|| Contact {
        point: cp.point,
        normal,
        depth: radius - sd,
        primitive,
        time_of_impact: None,
    })
}

/// Deepest penetration of each nose primitive against the mesh.
pub fn query_contacts(mesh: &TriMesh, prop: &MixedProp, pose: &GripPose) -> Vec<Contact> {
    prop.world_primitives(pose)
        .iter()
        .enumerate()
        .filter_map(|(id, prim)| match prim {
            NosePrimitive::Sphere { center, radius } => sphere_contact(mesh, center, *radius, id),
            NosePrimitive::Capsule { a, b, radius } => capsule_contact(mesh, a, b, *radius, id),
        })
        .collect()
}

/// Earliest contact of the tip moving from `start` to `end` during one tick.
/// A tip that starts inside the mesh reports `time_of_impact = 0`.
pub fn sweep_tip(mesh: &TriMesh, start: &Vec3, end: &Vec3) -> Option<Contact> {
    let (sd, cp, normal) = mesh.signed_distance(start);
    if sd < -INSIDE_TOL {
        return Some(Contact {
            point: cp.point,
            normal,
            depth: -sd,
            primitive: SWEEP_PRIMITIVE,
            time_of_impact: Some(0.0),
        });
    }
    let hit = mesh.first_hit(start, end)?;
    let face = mesh.face_normal(hit.triangle);
    let normal = if (end - start).dot(&face) <= 0.0 { face } else { -face };
    Some(Contact {
        point: hit.point,
        normal,
        depth: 0.0,
        primitive: SWEEP_PRIMITIVE,
        time_of_impact: Some(hit.t),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TipMotion {
    pub position: Vec3,
    /// The swept contact that clamped the motion, if any.
    pub hit: Option<Contact>,
}

/// Moves the tip from `start` toward `end` without crossing the surface.
///
/// On impact the tip stops just outside the hit point; with `slide` the
/// remaining motion is projected onto the contact plane and swept once more,
/// so a tip pressed onto the body can still move along it. A tip that starts
/// inside may only move to a shallower point.
pub fn resolve_tip_motion(mesh: &TriMesh, start: &Vec3, end: &Vec3, slide: bool) -> TipMotion {
    let Some(hit) = sweep_tip(mesh, start, end) else {
        return TipMotion {
            position: *end,
            hit: None,
        };
    };
    if hit.depth > 0.0 {
        let (sd_start, _, _) = mesh.signed_distance(start);
        let (sd_end, _, _) = mesh.signed_distance(end);
        let position = if sd_end > sd_start { *end } else { *start };
        return TipMotion {
            position,
            hit: Some(hit),
        };
    }
    let clamped = hit.point + hit.normal * SURFACE_OFFSET;
    let mut position = clamped;
    if slide {
        let remaining = end - hit.point;
        let tangential = remaining - hit.normal * remaining.dot(&hit.normal);
        let target = clamped + tangential;
        position = match sweep_tip(mesh, &clamped, &target) {
            None => target,
            Some(second) if second.depth == 0.0 => second.point + second.normal * SURFACE_OFFSET,
            Some(_) => clamped,
        };
        if mesh.signed_distance(&position).0 < 0.0 {
            position = clamped;
        }
    }
    TipMotion {
        position,
        hit: Some(hit),
    }
}

/// Penalty wrench on the grip from a set of contacts.
///
/// Per contact `f = max(0, k * depth - b * v_n) * n`, with `v_n` the normal
/// velocity of the contact point; torque is taken about the grip origin.
/// `velocity` is `[linear; angular]`.
pub fn contact_wrench(
    contacts: &[Contact],
    pose: &GripPose,
    velocity: &Vector6<f64>,
    gains: &PenaltyGains,
) -> Wrench {
    let v = velocity.fixed_rows::<3>(0).into_owned();
    let omega = velocity.fixed_rows::<3>(3).into_owned();
    let mut w = Wrench::zeros();
    for c in contacts {
        let arm = c.point - pose.position;
        let v_point = v + omega.cross(&arm);
        let vn = v_point.dot(&c.normal);
        let magnitude = (gains.stiffness * c.depth - gains.damping * vn).max(0.0);
        let force = c.normal * magnitude;
        let torque = arm.cross(&force);
        w.fixed_rows_mut::<3>(0).zip_apply(&force, |a, b| *a += b);
        w.fixed_rows_mut::<3>(3).zip_apply(&torque, |a, b| *a += b);
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::synth;

    fn sphere_prop(radius: f64) -> MixedProp {
        MixedProp {
            nose: vec![NosePrimitive::Sphere {
                center: Vec3::zeros(),
                radius,
            }],
            tip: Vec3::zeros(),
            nose_root: Vec3::zeros(),
            ..MixedProp::putty_gun()
        }
    }

    #[test]
    fn sphere_above_plate_has_no_contact() {
        // sphere surface 5 mm above the plate
        let plate = synth::plate(0.2, 0.0, 8);
        let c = query_contacts(&plate, &sphere_prop(0.01), &GripPose::at(Vec3::new(0.01, 0.0, 0.015)));
        assert!(c.is_empty());
    }

    #[test]
    fn sphere_below_plate_surface() {
        let plate = synth::plate(0.2, 0.0, 8);
        let c = query_contacts(
            &plate,
            &sphere_prop(0.01),
            &GripPose::at(Vec3::new(0.013, 0.007, -0.005)),
        );
        assert_eq!(c.len(), 1);
        assert!((c[0].depth - 0.015).abs() < 1e-15);
        assert!((c[0].normal - Vec3::z()).norm() < 1e-15);
    }

    #[test]
    fn no_contacts_no_wrench() {
        let w = contact_wrench(&[], &GripPose::identity(), &Vector6::zeros(), &PenaltyGains::default());
        assert_eq!(w, Wrench::zeros());
    }

    #[test]
    fn static_penalty_force() {
        let c = Contact {
            point: Vec3::new(0.1, 0.0, 0.0),
            normal: Vec3::z(),
            depth: 0.002,
            primitive: 0,
            time_of_impact: None,
        };
        let w = contact_wrench(&[c], &GripPose::identity(), &Vector6::zeros(), &PenaltyGains::default());
        assert!((w.fixed_rows::<3>(0).norm() - 4.0).abs() < 1e-12);
        assert!((w[2] - 4.0).abs() < 1e-12);
        // lever arm along x, force along z -> torque about -y
        assert!((w[4] + 0.4).abs() < 1e-12);
    }

    #[test]
    fn contact_at_grip_origin_has_no_torque() {
        let c = Contact {
            point: Vec3::new(0.2, 0.1, 0.0),
            normal: Vec3::new(0.0, 0.6, 0.8),
            depth: 0.003,
            primitive: 0,
            time_of_impact: None,
        };
        let pose = GripPose::at(c.point);
        let w = contact_wrench(&[c], &pose, &Vector6::zeros(), &PenaltyGains::default());
        assert_eq!(w.fixed_rows::<3>(3).norm(), 0.0);
    }

    #[test]
    fn damping_never_pulls() {
        let c = Contact {
            point: Vec3::zeros(),
            normal: Vec3::z(),
            depth: 0.001,
            primitive: 0,
            time_of_impact: None,
        };
        // moving out fast: damping would exceed spring force
        let vel = Vector6::new(0.0, 0.0, 10.0, 0.0, 0.0, 0.0);
        let w = contact_wrench(&[c], &GripPose::identity(), &vel, &PenaltyGains::default());
        assert_eq!(w, Wrench::zeros());
    }

    #[test]
    fn sweep_outside_sphere_misses() {
        let s = synth::icosphere(1.0, 3);
        assert!(sweep_tip(&s, &Vec3::new(2.0, 0.0, 0.0), &Vec3::new(2.0, 1.0, 0.5)).is_none());
    }

    #[test]
    fn sweep_into_sphere_hits_near_half() {
        let s = synth::icosphere(1.0, 3);
        let c = sweep_tip(&s, &Vec3::new(0.0, 0.0, 2.0), &Vec3::zeros()).unwrap();
        let toi = c.time_of_impact.unwrap();
        assert!((toi - 0.5).abs() <= 0.02, "{toi}");
        assert!(c.normal.z > 0.9);
    }

    #[test]
    fn sweep_from_inside_is_immediate() {
        let s = synth::icosphere(1.0, 3);
        let c = sweep_tip(&s, &Vec3::new(0.1, 0.0, 0.0), &Vec3::new(5.0, 0.0, 0.0)).unwrap();
        assert_eq!(c.time_of_impact, Some(0.0));
        assert!(c.depth > 0.8);
    }

    #[test]
    fn tip_slides_along_plate() {
        let plate = synth::plate(0.2, 0.0, 8);
        let start = Vec3::new(0.0, 0.0, 0.001);
        let end = Vec3::new(0.01, 0.0, -0.001);
        let m = resolve_tip_motion(&plate, &start, &end, true);
        assert!(m.hit.is_some());
        assert!((m.position.x - 0.01).abs() < 1e-12);
        assert!(m.position.z > 0.0 && m.position.z < 1e-6);
        let stuck = resolve_tip_motion(&plate, &start, &end, false);
        assert!((stuck.position.x - 0.005).abs() < 1e-12);
    }

    #[test]
    fn inside_tip_may_only_move_outward() {
        let s = synth::icosphere(1.0, 2);
        let start = Vec3::new(0.0, 0.0, 0.9);
        let deeper = resolve_tip_motion(&s, &start, &Vec3::new(0.0, 0.0, 0.5), true);
        assert_eq!(deeper.position, start);
        let out = resolve_tip_motion(&s, &start, &Vec3::new(0.0, 0.0, 1.5), true);
        assert_eq!(out.position, Vec3::new(0.0, 0.0, 1.5));
    }
}
