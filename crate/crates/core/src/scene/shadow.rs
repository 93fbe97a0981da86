//! Planar shadows: vertices pushed along the light direction onto a plane.

use nalgebra::Unit;
use serde::{Deserialize, Serialize};

use super::geometry::Vec3;
use super::SceneError;

/// Minimum |n·l| for a usable light.
pub const PARALLEL_LIGHT_TOL: f64 = 1e-6;

/// Points `x` with `normal · x = offset`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: Unit<Vec3>,
    pub offset: f64,
}

impl Plane {
    pub fn new(normal: Vec3, offset: f64) -> Result<Self, SceneError> {
        let norm = normal.norm();
        if !(norm > 0.0) || !norm.is_finite() || !offset.is_finite() {
            return Err(SceneError::Invalid("plane normal must be finite and nonzero".into()));
        }
        Ok(Self {
            normal: Unit::new_unchecked(normal / norm),
            offset: offset / norm,
        })
    }

    /// Horizontal plane `z = height`.
    pub fn ground(height: f64) -> Self {
        Self {
            normal: Vec3::z_axis(),
            offset: height,
        }
    }

    pub fn through(point: &Vec3, normal: &Vec3) -> Result<Self, SceneError> {
        let n = Unit::try_new(*normal, 0.0)
            .ok_or_else(|| SceneError::Invalid("plane normal must be nonzero".into()))?;
        Ok(Self {
            normal: n,
            offset: n.dot(point),
        })
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

/// Projects each vertex along `light` onto `plane`:
/// `x' = x - (n·x - d) / (n·l) * l`.
pub fn project_shadow(vertices: &[Vec3], light: &Vec3, plane: &Plane) -> Result<Vec<Vec3>, SceneError> {
    let denom = plane.normal.dot(light);
    if !(denom.abs() > PARALLEL_LIGHT_TOL) {
        return Err(SceneError::DegenerateLight);
    }
    Ok(vertices
        .iter()
        .map(|x| x - light * (plane.signed_distance(x) / denom))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertical_light_drops_height() {
        let s = project_shadow(&[Vec3::new(0.3, -0.2, 1.7)], &-Vec3::z(), &Plane::ground(0.0)).unwrap();
        assert_eq!(s[0], Vec3::new(0.3, -0.2, 0.0));
    }

    #[test]
    fn on_plane_point_unchanged() {
        let p = Vec3::new(0.1, 0.2, -0.16);
        let light = Vec3::new(0.3, 0.1, -1.0).normalize();
        let s = project_shadow(&[p], &light, &Plane::ground(-0.16)).unwrap();
        assert_eq!(s[0], p);
    }

    #[test]
    fn parallel_light_rejected() {
        let e = project_shadow(&[Vec3::zeros()], &Vec3::x(), &Plane::ground(0.0));
        assert_eq!(e, Err(SceneError::DegenerateLight));
    }

    #[test]
    fn scaled_plane_is_normalized() {
        let p = Plane::new(Vec3::new(0.0, 0.0, 2.0), 1.0).unwrap();
        assert_eq!(p.offset, 0.5);
        assert_eq!(p.signed_distance(&Vec3::new(3.0, 0.0, 1.5)), 1.0);
    }
}
