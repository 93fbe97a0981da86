//! Geometry of the stringed rig.
//!
//! Eight motors sit at the corners of a hexahedron around the workspace. Their
//! strings meet the grip at four points spaced 90° apart on a circle in the
//! grip's local XY plane, two strings per point. The structure matrix maps the
//! eight (pull-only) string tensions to the wrench felt by the grip:
//!
//! ```text
//!     w = A t,    A[:, i] = [ u_i ; (R r_i) x u_i ]
//! ```
//!
//! where `u_i` is the unit vector from attachment point `p + R r_i` toward
//! motor `m_i`. Torque is taken about the grip origin (circle center).

use std::path::Path;

use nalgebra::{SMatrix, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const STRING_COUNT: usize = 8;
pub const ATTACHMENT_COUNT: usize = 4;

/// Below this distance an attachment point is considered to sit on its motor.
pub const DEGENERATE_STRING_DISTANCE: f64 = 1e-6;

/// Half extents of the default motor box (1.4 x 0.8 x 1.0 m).
pub const DEFAULT_BOX_HALF_EXTENTS: [f64; 3] = [0.7, 0.4, 0.5];
pub const DEFAULT_CIRCLE_DIAMETER: f64 = 0.20;
pub const DEFAULT_TENSION_MIN: f64 = 0.5;
pub const DEFAULT_TENSION_MAX: f64 = 30.0;

/// Circle diameters outside this range raise a validation warning.
pub const RECOMMENDED_DIAMETER_RANGE: (f64, f64) = (0.10, 0.30);

pub type Wrench = Vector6<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RigError {
    #[error("string {string} is degenerate: attachment point is {distance:.3e} m from its motor")]
    DegenerateString { string: usize, distance: f64 },
    #[error("invalid rig configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot read rig file {path}: {message}")]
    Io { path: String, message: String },
    #[error("cannot parse rig file {path}: {message}")]
    Parse { path: String, message: String },
}

/// Connection of one string: which motor drives it and which attachment point
/// on the grip it is tied to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StringRoute {
    pub motor: usize,
    pub attachment: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigConfig {
    pub motor_positions: [Vector3<f64>; STRING_COUNT],
    pub circle_diameter: f64,
    pub string_pairing: [StringRoute; STRING_COUNT],
    pub tension_min: f64,
    pub tension_max: f64,
}

/// Pose of the grip (the attachment-circle center and its frame).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GripPose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl GripPose {
    /// Builds a pose from raw quaternion components, renormalizing them.
    pub fn new(position: Vector3<f64>, w: f64, x: f64, y: f64, z: f64) -> Self {
        let q = nalgebra::Quaternion::new(w, x, y, z);
        Self {
            position,
            orientation: UnitQuaternion::from_quaternion(q),
        }
    }

    pub fn from_parts(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        // from_quaternion renormalizes so the stored quaternion is unit to rounding
        Self {
            position,
            orientation: UnitQuaternion::from_quaternion(orientation.into_inner()),
        }
    }

    pub fn identity() -> Self {
        Self::at(Vector3::zeros())
    }

    pub fn at(position: Vector3<f64>) -> Self {
        Self {
            position,
            orientation: UnitQuaternion::identity(),
        }
    }

    /// Maps a point from grip-local to world coordinates.
    pub fn transform_point(&self, local: &Vector3<f64>) -> Vector3<f64> {
        self.position + self.orientation * local
    }

    pub fn to_isometry(&self) -> nalgebra::Isometry3<f64> {
        nalgebra::Isometry3::from_parts(self.position.into(), self.orientation)
    }

    pub fn from_isometry(iso: &nalgebra::Isometry3<f64>) -> Self {
        Self::from_parts(iso.translation.vector, iso.rotation)
    }

    /// Quaternion as `[w, x, y, z]`.
    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = self.orientation.quaternion();
        [q.w, q.i, q.j, q.k]
    }
}

impl Default for GripPose {
    fn default() -> Self {
        Self::identity()
    }
}

/// The 6x8 map from string tensions to grip wrench.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StructureMatrix(pub SMatrix<f64, 6, STRING_COUNT>);

impl StructureMatrix {
    /// Assembles a structure matrix from unit string directions and the
    /// world-frame lever arms `R r_i` of their attachment points.
    pub fn from_parts(
        directions: &[Vector3<f64>; STRING_COUNT],
        lever_arms: &[Vector3<f64>; STRING_COUNT],
    ) -> Self {
        let mut a = SMatrix::<f64, 6, STRING_COUNT>::zeros();
        for i in 0..STRING_COUNT {
            let u = directions[i];
            let torque = lever_arms[i].cross(&u);
            a.fixed_view_mut::<3, 1>(0, i).copy_from(&u);
            a.fixed_view_mut::<3, 1>(3, i).copy_from(&torque);
        }
        Self(a)
    }

    pub fn matrix(&self) -> &SMatrix<f64, 6, STRING_COUNT> {
        &self.0
    }

    /// Wrench produced by the given tensions.
    pub fn apply(&self, tensions: &[f64; STRING_COUNT]) -> Wrench {
        self.0 * SMatrix::<f64, STRING_COUNT, 1>::from_column_slice(tensions)
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> Vector6<f64> {
        let mut sv = self.0.transpose().svd(false, false).singular_values;
        sv.as_mut_slice()
            .sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        sv
    }

    /// Numerical rank using a relative threshold on the singular values.
    pub fn rank(&self, relative_tol: f64) -> usize {
        let sv = self.singular_values();
        let cutoff = sv[0] * relative_tol;
        if sv[0] == 0.0 {
            return 0;
        }
        sv.iter().filter(|&&s| s > cutoff).count()
    }

    /// `sigma_max / sigma_min`, or `None` when the matrix is rank deficient.
    pub fn condition_number(&self) -> Option<f64> {
        let sv = self.singular_values();
        let min = sv[5];
        if sv[0] == 0.0 || min <= sv[0] * 1e-12 {
            None
        } else {
            Some(sv[0] / min)
        }
    }
}

impl RigConfig {
    /// The rig used throughout the workbench: an axis-aligned box of motors,
    /// a 20 cm attachment circle and pairing `attachment j -> motors j, j+4`.
    pub fn default_rig() -> Self {
        Self::box_rig(DEFAULT_BOX_HALF_EXTENTS, DEFAULT_CIRCLE_DIAMETER)
    }

    /// Box rig centered at the origin with the given half extents.
    ///
    /// Motor order is chosen so that the two motors of attachment `j` (motors
    /// `j` and `j + 4`) lie on opposite faces and mirror each other through the
    /// attachment's radial axis; at the center pose the rig is then in wrench
    /// closure with all tensions equal. Of the orderings with that property
    /// this one keeps the whole central half of a 1.4 x 0.8 x 1.0 m box in
    /// wrench closure.
    pub fn box_rig(half_extents: [f64; 3], circle_diameter: f64) -> Self {
        let [hx, hy, hz] = half_extents;
        let m = |sx: f64, sy: f64, sz: f64| Vector3::new(sx * hx, sy * hy, sz * hz);
        let motor_positions = [
            m(1.0, 1.0, -1.0),
            m(-1.0, -1.0, 1.0),
            m(-1.0, 1.0, 1.0),
            m(-1.0, 1.0, -1.0),
            m(1.0, -1.0, 1.0),
            m(1.0, -1.0, -1.0),
            m(-1.0, -1.0, -1.0),
            m(1.0, 1.0, 1.0),
        ];
        let mut string_pairing = [StringRoute {
            motor: 0,
            attachment: 0,
        }; STRING_COUNT];
        for (i, route) in string_pairing.iter_mut().enumerate() {
            *route = StringRoute {
                motor: i,
                attachment: i % ATTACHMENT_COUNT,
            };
        }
        Self {
            motor_positions,
            circle_diameter,
            string_pairing,
            tension_min: DEFAULT_TENSION_MIN,
            tension_max: DEFAULT_TENSION_MAX,
        }
    }

    pub fn with_diameter(&self, circle_diameter: f64) -> Self {
        Self {
            circle_diameter,
            ..self.clone()
        }
    }

    /// Attachment points in the grip frame: radius d/2 at 0°, 90°, 180°, 270°.
    pub fn attachment_offsets(&self) -> [Vector3<f64>; ATTACHMENT_COUNT] {
        let r = 0.5 * self.circle_diameter;
        [
            Vector3::new(r, 0.0, 0.0),
            Vector3::new(0.0, r, 0.0),
            Vector3::new(-r, 0.0, 0.0),
            Vector3::new(0.0, -r, 0.0),
        ]
    }

    /// Center of the motor bounding box.
    pub fn center(&self) -> Vector3<f64> {
        let (lo, hi) = self.bounding_box();
        0.5 * (lo + hi)
    }

    pub fn bounding_box(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = self.motor_positions[0];
        let mut hi = lo;
        for m in &self.motor_positions[1..] {
            lo = lo.inf(m);
            hi = hi.sup(m);
        }
        (lo, hi)
    }

    /// Checks the structural invariants. Returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>, RigError> {
        let invalid = |msg: String| Err(RigError::InvalidConfig(msg));
        if !self.circle_diameter.is_finite() || self.circle_diameter < 0.0 {
            return invalid(format!(
                "circle_diameter must be >= 0, got {}",
                self.circle_diameter
            ));
        }
        if !(self.tension_min > 0.0 && self.tension_min < self.tension_max)
            || !self.tension_max.is_finite()
        {
            return invalid(format!(
                "need 0 < tension_min < tension_max, got {} / {}",
                self.tension_min, self.tension_max
            ));
        }
        for (i, m) in self.motor_positions.iter().enumerate() {
            if !m.iter().all(|c| c.is_finite()) {
                return invalid(format!("motor {i} has a non-finite coordinate"));
            }
            for (j, other) in self.motor_positions.iter().enumerate().skip(i + 1) {
                if (m - other).norm() <= DEGENERATE_STRING_DISTANCE {
                    return invalid(format!("motors {i} and {j} coincide"));
                }
            }
        }
        let (lo, hi) = self.bounding_box();
        let extent = hi - lo;
        if extent.x * extent.y * extent.z <= 0.0 {
            return invalid("motor positions span no volume".into());
        }
        let mut motor_use = [0usize; STRING_COUNT];
        let mut attachment_use = [0usize; ATTACHMENT_COUNT];
        for (i, route) in self.string_pairing.iter().enumerate() {
            if route.motor >= STRING_COUNT || route.attachment >= ATTACHMENT_COUNT {
                return invalid(format!("string {i} routes to an unknown motor or attachment"));
            }
            motor_use[route.motor] += 1;
            attachment_use[route.attachment] += 1;
        }
        if motor_use.iter().any(|&n| n != 1) {
            return invalid("each motor must carry exactly one string".into());
        }
        if attachment_use.iter().any(|&n| n != 2) {
            return invalid("each attachment point must carry exactly two strings".into());
        }

        let mut warnings = Vec::new();
        let (lo_d, hi_d) = RECOMMENDED_DIAMETER_RANGE;
        if self.circle_diameter < lo_d || self.circle_diameter > hi_d {
            warnings.push(format!(
                "circle diameter {:.3} m is outside the recommended {lo_d:.2}-{hi_d:.2} m range",
                self.circle_diameter
            ));
        }
        Ok(warnings)
    }

    /// World positions of the string ends on the grip, one per string.
    pub fn attachment_points(&self, pose: &GripPose) -> [Vector3<f64>; STRING_COUNT] {
        let offsets = self.attachment_offsets();
        std::array::from_fn(|i| pose.transform_point(&offsets[self.string_pairing[i].attachment]))
    }

    pub fn motor_of(&self, string: usize) -> Vector3<f64> {
        self.motor_positions[self.string_pairing[string].motor]
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| RigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            RigError::Parse { message, .. } => RigError::Parse {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, RigError> {
        let file: RigFile = toml::from_str(text).map_err(|e| RigError::Parse {
            path: "<string>".into(),
            message: e.to_string(),
        })?;
        let rig = file.try_into_config()?;
        rig.validate()?;
        Ok(rig)
    }

    pub fn to_toml_string(&self) -> String {
        let file = RigFile {
            motors: self.motor_positions.iter().map(|m| [m.x, m.y, m.z]).collect(),
            circle_diameter: self.circle_diameter,
            pairing: self
                .string_pairing
                .iter()
                .map(|r| [r.motor, r.attachment])
                .collect(),
            tension_min: self.tension_min,
            tension_max: self.tension_max,
        };
        toml::to_string(&file).expect("rig file serializes")
    }
}

impl Default for RigConfig {
    fn default() -> Self {
        Self::default_rig()
    }
}

/// On-disk rig description (TOML).
///
/// ```toml
/// circle_diameter = 0.2       # m
/// tension_min = 0.5           # N
/// tension_max = 30.0          # N
/// motors = [[0.7, 0.4, -0.5], ...]   # 8 points, m
/// pairing = [[0, 0], [1, 1], ...]    # per string: [motor, attachment]
/// ```
#[derive(Debug, Serialize, Deserialize)]
struct RigFile {
    circle_diameter: f64,
    tension_min: f64,
    tension_max: f64,
    motors: Vec<[f64; 3]>,
    pairing: Vec<[usize; 2]>,
}

impl RigFile {
    fn try_into_config(self) -> Result<RigConfig, RigError> {
        if self.motors.len() != STRING_COUNT {
            return Err(RigError::InvalidConfig(format!(
                "expected {STRING_COUNT} motors, found {}",
                self.motors.len()
            )));
        }
        if self.pairing.len() != STRING_COUNT {
            return Err(RigError::InvalidConfig(format!(
                "expected {STRING_COUNT} pairing entries, found {}",
                self.pairing.len()
            )));
        }
        Ok(RigConfig {
            motor_positions: std::array::from_fn(|i| Vector3::from(self.motors[i])),
            circle_diameter: self.circle_diameter,
            string_pairing: std::array::from_fn(|i| StringRoute {
                motor: self.pairing[i][0],
                attachment: self.pairing[i][1],
            }),
            tension_min: self.tension_min,
            tension_max: self.tension_max,
        })
    }
}

/// Per-string vectors from attachment point to motor, with degeneracy check.
fn string_vectors(
    rig: &RigConfig,
    pose: &GripPose,
) -> Result<[Vector3<f64>; STRING_COUNT], RigError> {
    let attach = rig.attachment_points(pose);
    let mut out = [Vector3::zeros(); STRING_COUNT];
    for i in 0..STRING_COUNT {
        let v = rig.motor_of(i) - attach[i];
        let distance = v.norm();
        if !(distance > DEGENERATE_STRING_DISTANCE) {
            return Err(RigError::DegenerateString { string: i, distance });
        }
        out[i] = v;
    }
    Ok(out)
}

/// Length of each string at the given pose.
pub fn string_lengths(rig: &RigConfig, pose: &GripPose) -> Result<[f64; STRING_COUNT], RigError> {
    let v = string_vectors(rig, pose)?;
    Ok(std::array::from_fn(|i| v[i].norm()))
}

pub fn build_structure_matrix(rig: &RigConfig, pose: &GripPose) -> Result<StructureMatrix, RigError> {
    let v = string_vectors(rig, pose)?;
    let offsets = rig.attachment_offsets();
    let directions: [Vector3<f64>; STRING_COUNT] = std::array::from_fn(|i| v[i] / v[i].norm());
    let lever_arms: [Vector3<f64>; STRING_COUNT] =
        std::array::from_fn(|i| pose.orientation * offsets[rig.string_pairing[i].attachment]);
    Ok(StructureMatrix::from_parts(&directions, &lever_arms))
}
