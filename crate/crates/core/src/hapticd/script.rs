//! Scenario scripts: timestamped grip poses and trigger states.
//!
//! Text format, one keyframe per line:
//!
//! ```text
//! # interpolation: linear
//! # t      x      y      z      qw  qx  qy  qz  trigger
//! 0.000  0.0  0.05  0.03   1   0   0   0   0
//! 0.500  0.0  0.05  0.01   1   0   0   0   1
//! ```
//!
//! Times in seconds (nondecreasing), positions in meters, quaternions need
//! not be normalized exactly (within 1e-6) and the trigger is `0`/`1`. A
//! `# interpolation: hold|linear` header selects how poses are filled
//! between keyframes; the trigger always holds.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rig::GripPose;
use crate::scene::{MixedProp, Vec3};

const QUATERNION_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScriptError {
    #[error("{path}line {line}: {message}")]
    Line {
        path: String,
        line: usize,
        message: String,
    },
    #[error("cannot read script {path}: {message}")]
    Io { path: String, message: String },
}

impl ScriptError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        ScriptError::Line {
            path: String::new(),
            line,
            message: message.into(),
        }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            ScriptError::Line { line, .. } => Some(*line),
            ScriptError::Io { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Hold,
    #[default]
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub time: f64,
    pub pose: GripPose,
    pub trigger: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub interpolation: Interpolation,
    pub keyframes: Vec<Keyframe>,
}

impl ScenarioScript {
    pub fn new(interpolation: Interpolation, keyframes: Vec<Keyframe>) -> Result<Self, ScriptError> {
        for (i, k) in keyframes.iter().enumerate() {
            if !k.time.is_finite() || k.time < 0.0 {
                return Err(ScriptError::at(i + 1, "time must be finite and >= 0"));
            }
            if i > 0 && k.time < keyframes[i - 1].time {
                return Err(ScriptError::at(i + 1, "timestamps must be nondecreasing"));
            }
        }
        Ok(Self {
            interpolation,
            keyframes,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.keyframes.is_empty()
    }

    /// Time of the last keyframe (s).
    pub fn duration(&self) -> f64 {
        self.keyframes.last().map_or(0.0, |k| k.time)
    }

    /// Number of ticks at `dt_ns` covering `[0, duration]`; 0 for an empty
    /// script.
    pub fn tick_count(&self, dt_ns: u64) -> u64 {
        if self.is_empty() {
            return 0;
        }
        // round to the nanosecond so decimal timestamps land on their tick
        let end_ns = (self.duration() * 1e9).round() as u64;
        end_ns / dt_ns + 1
    }

    /// Commanded pose and trigger at time `t`.
    pub fn sample(&self, t: f64) -> Option<(GripPose, bool)> {
        let ks = &self.keyframes;
        let first = ks.first()?;
        // last keyframe at or before t
        let i = ks.partition_point(|k| k.time <= t);
        if i == 0 {
            return Some((first.pose, first.trigger));
        }
        let k0 = &ks[i - 1];
        let Some(k1) = ks.get(i) else {
            return Some((k0.pose, k0.trigger));
        };
        let pose = match self.interpolation {
            Interpolation::Hold => k0.pose,
            Interpolation::Linear => {
                let span = k1.time - k0.time;
                let u = if span > 0.0 { (t - k0.time) / span } else { 1.0 };
                let position = k0.pose.position.lerp(&k1.pose.position, u);
                let orientation = k0
                    .pose
                    .orientation
                    .try_slerp(&k1.pose.orientation, u, 1e-12)
                    .unwrap_or(if u < 0.5 { k0.pose.orientation } else { k1.pose.orientation });
                GripPose::from_parts(position, orientation)
            }
        };
        Some((pose, k0.trigger))
    }

    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let mut interpolation = Interpolation::default();
        let mut keyframes: Vec<Keyframe> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.trim();
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(mode) = comment.trim().strip_prefix("interpolation:") {
                    interpolation = match mode.trim() {
                        "linear" => Interpolation::Linear,
                        "hold" => Interpolation::Hold,
                        other => {
                            return Err(ScriptError::at(
                                line_no,
                                format!("unknown interpolation {other:?}"),
                            ))
                        }
                    };
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 9 {
                return Err(ScriptError::at(
                    line_no,
                    format!("expected 9 fields (t x y z qw qx qy qz trigger), found {}", fields.len()),
                ));
            }
            let mut v = [0.0; 8];
            for (slot, f) in v.iter_mut().zip(&fields) {
                *slot = f
                    .parse()
                    .ok()
                    .filter(|x: &f64| x.is_finite())
                    .ok_or_else(|| ScriptError::at(line_no, format!("bad number {f:?}")))?;
            }
            let trigger = match fields[8] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(ScriptError::at(line_no, format!("trigger must be 0 or 1, got {other:?}")))
                }
            };
            let q = Quaternion::new(v[4], v[5], v[6], v[7]);
            if (q.norm() - 1.0).abs() > QUATERNION_NORM_TOL {
                return Err(ScriptError::at(
                    line_no,
                    format!("quaternion norm {} is not 1", q.norm()),
                ));
            }
            if let Some(prev) = keyframes.last() {
                if v[0] < prev.time {
                    return Err(ScriptError::at(line_no, "timestamps must be nondecreasing"));
                }
            }
            if v[0] < 0.0 {
                return Err(ScriptError::at(line_no, "time must be >= 0"));
            }
            keyframes.push(Keyframe {
                time: v[0],
                pose: GripPose::from_parts(
                    Vector3::new(v[1], v[2], v[3]),
                    UnitQuaternion::from_quaternion(q),
                ),
                trigger,
            });
        }
        Ok(Self {
            interpolation,
            keyframes,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScriptError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ScriptError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text).map_err(|e| match e {
            ScriptError::Line { line, message, .. } => ScriptError::Line {
                path: format!("{}: ", path.display()),
                line,
                message,
            },
            other => other,
        })
    }

    pub fn to_text(&self) -> String {
        let mode = match self.interpolation {
            Interpolation::Hold => "hold",
            Interpolation::Linear => "linear",
        };
        let mut s = format!("# interpolation: {mode}\n# t x y z qw qx qy qz trigger\n");
        for k in &self.keyframes {
            let p = k.pose.position;
            let [w, x, y, z] = k.pose.quaternion_wxyz();
            let _ = writeln!(
                s,
                "{:?} {:?} {:?} {:?} {:?} {:?} {:?} {:?} {}",
                k.time, p.x, p.y, p.z, w, x, y, z, k.trigger as u8
            );
        }
        s
    }
}

/// How a seam-following script is laid out.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeamFollowPlan {
    /// Tip speed along the seam (m/s).
    pub speed: f64,
    /// Start/finish height of the tip above the seam ends (m).
    pub approach_height: f64,
    /// Time for the descent and for the lift (s).
    pub approach_time: f64,
    /// How far below the surface the tip is commanded (m); the contact
    /// clamp keeps the actual tip on the surface.
    pub press_depth: f64,
    /// Lateral offset applied from mid-seam on, to provoke a slip (m).
    pub slip_offset: Option<Vec3>,
}

impl Default for SeamFollowPlan {
    fn default() -> Self {
        Self {
            speed: 0.06,
            approach_height: 0.02,
            approach_time: 0.5,
            press_depth: 0.001,
            slip_offset: None,
        }
    }
}

/// Script that drives the prop tip along `seam` with the trigger held,
/// keeping the grip orientation fixed.
pub fn seam_follow_script(
    seam: &[Vec3],
    prop: &MixedProp,
    orientation: UnitQuaternion<f64>,
    plan: &SeamFollowPlan,
) -> ScenarioScript {
    let grip_for_tip = |tip: Vec3| GripPose::from_parts(tip - orientation * prop.tip, orientation);
    let up = Vec3::z();
    let down = up * plan.press_depth;
    let mut keyframes = Vec::new();
    let mut t = 0.0;
    let mut push = |t: f64, tip: Vec3, trigger: bool| {
        keyframes.push(Keyframe {
            time: t,
            pose: grip_for_tip(tip),
            trigger,
        })
    };
    let Some(first) = seam.first() else {
        return ScenarioScript::default();
    };
    push(t, first + up * plan.approach_height, true);
    t += plan.approach_time;
    push(t, first - down, true);
    let mid = seam.len() / 2;
    let mut prev = *first;
    for (i, p) in seam.iter().enumerate().skip(1) {
        t += (p - prev).norm() / plan.speed;
        prev = *p;
        match plan.slip_offset {
            Some(off) if i > mid => push(t, p + off - down, true),
            Some(off) if i == mid => {
                push(t, p - down, true);
                // quick sideways jump off the seam
                t += off.norm() / plan.speed;
                push(t, p + off - down, true);
            }
            _ => push(t, p - down, true),
        }
    }
    let last = *seam.last().unwrap() + plan.slip_offset.unwrap_or_else(Vec3::zeros);
    t += plan.approach_time;
    push(t, last + up * plan.approach_height, true);
    t += 0.05;
    push(t, last + up * plan.approach_height, false);
    ScenarioScript {
        interpolation: Interpolation::Linear,
        keyframes,
    }
}
