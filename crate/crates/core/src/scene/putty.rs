//! Putty extrusion along the nozzle path, and how well a bead follows a seam.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Rotation3;
use serde::{Deserialize, Serialize};

use super::geometry::Vec3;
use super::SceneError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PuttySettings {
    /// Tube radius (m).
    pub radius: f64,
    /// Minimum distance between consecutive samples (m).
    pub min_spacing: f64,
    pub ring_segments: usize,
}

impl Default for PuttySettings {
    fn default() -> Self {
        Self {
            radius: 0.004,
            min_spacing: 0.002,
            ring_segments: 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PuttySample {
    pub position: Vec3,
    /// Simulation time (s).
    pub time: f64,
}

/// One continuous extrusion: the sampled tip path and its tube mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct PuttyBead {
    settings: PuttySettings,
    samples: Vec<PuttySample>,
    /// Ring normal used for parallel transport, one per sample.
    frames: Vec<Vec3>,
    tube_vertices: Vec<Vec3>,
}

// a path stepped at exactly min_spacing can land a few ulps short
const SPACING_SLACK: f64 = 1e-12;

fn any_perpendicular(t: &Vec3) -> Vec3 {
    let helper = if t.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    t.cross(&helper).normalize()
}

impl PuttyBead {
    pub fn new(settings: PuttySettings) -> Self {
        Self {
            settings,
            samples: Vec::new(),
            frames: Vec::new(),
            tube_vertices: Vec::new(),
        }
    }

    pub fn settings(&self) -> &PuttySettings {
        &self.settings
    }

    pub fn samples(&self) -> &[PuttySample] {
        &self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn radius(&self) -> f64 {
        self.settings.radius
    }

    /// `ring_segments` vertices per sample, ring by ring.
    pub fn tube_vertices(&self) -> &[Vec3] {
        &self.tube_vertices
    }

    /// Quads between consecutive rings, split in two triangles each.
    pub fn tube_triangles(&self) -> Vec<[u32; 3]> {
        let n = self.settings.ring_segments as u32;
        let rings = self.samples.len() as u32;
        let mut out = Vec::with_capacity((2 * n * rings.saturating_sub(1)) as usize);
        for r in 1..rings {
            let (p, q) = ((r - 1) * n, r * n);
            for k in 0..n {
                let k1 = (k + 1) % n;
                out.push([p + k, p + k1, q + k1]);
                out.push([p + k, q + k1, q + k]);
            }
        }
        out
    }

    /// Length of the extruded centerline (m).
    pub fn length(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| (w[1].position - w[0].position).norm())
            .sum()
    }

    /// Appends `sample` if it is far enough from the last one. Returns whether
    /// it was appended.
    pub fn extrude(&mut self, sample: PuttySample) -> bool {
        if let Some(last) = self.samples.last() {
            let gap = (sample.position - last.position).norm();
            if gap < self.settings.min_spacing - SPACING_SLACK {
                return false;
            }
        }
        self.samples.push(sample);
        self.extend_tube();
        true
    }

    fn extend_tube(&mut self) {
        let n = self.samples.len();
        let i = n - 1;
        if n == 1 {
            self.frames.push(any_perpendicular(&Vec3::z()));
            self.push_ring(i, &Vec3::z());
            return;
        }
        let tangent = (self.samples[i].position - self.samples[i - 1].position).normalize();
        if n == 2 {
            // the first ring could not know its direction until now
            self.frames[0] = any_perpendicular(&tangent);
            self.tube_vertices.clear();
            self.push_ring(0, &tangent);
            self.frames.push(self.frames[0]);
            self.push_ring(1, &tangent);
            return;
        }
        let prev_tangent =
            (self.samples[i - 1].position - self.samples[i - 2].position).normalize();
        let transport = Rotation3::rotation_between(&prev_tangent, &tangent)
            .unwrap_or_else(Rotation3::identity);
        let carried = transport * self.frames[i - 1];
        // re-orthogonalize against drift
        let normal = (carried - tangent * carried.dot(&tangent)).normalize();
        self.frames.push(normal);
        self.push_ring(i, &tangent);
    }

    fn push_ring(&mut self, i: usize, tangent: &Vec3) {
        let c = self.samples[i].position;
        let u = self.frames[i];
        let v = tangent.cross(&u);
        let seg = self.settings.ring_segments;
        for k in 0..seg {
            let a = std::f64::consts::TAU * k as f64 / seg as f64;
            self.tube_vertices
                .push(c + (u * a.cos() + v * a.sin()) * self.settings.radius);
        }
    }
}

/// All beads laid so far. Pressing the trigger starts a bead; releasing it
/// closes the current one.
#[derive(Clone, Debug, PartialEq)]
pub struct PuttyTrail {
    settings: PuttySettings,
    beads: Vec<PuttyBead>,
    pressed: bool,
}

impl PuttyTrail {
    pub fn new(settings: PuttySettings) -> Self {
        Self {
            settings,
            beads: Vec::new(),
            pressed: false,
        }
    }

    pub fn settings(&self) -> &PuttySettings {
        &self.settings
    }

    pub fn beads(&self) -> &[PuttyBead] {
        &self.beads
    }

    pub fn sample_count(&self) -> usize {
        self.beads.iter().map(|b| b.samples.len()).sum()
    }

    /// Feeds one tip sample. Returns the sample if it was appended.
    pub fn extrude(&mut self, position: Vec3, time: f64, trigger: bool) -> Option<PuttySample> {
        if !trigger {
            self.pressed = false;
            return None;
        }
        if !self.pressed {
            self.pressed = true;
            self.beads.push(PuttyBead::new(self.settings));
        }
        let bead = self.beads.last_mut().expect("bead started on press");
        let sample = PuttySample { position, time };
        bead.extrude(sample).then_some(sample)
    }
}

impl Default for PuttyTrail {
    fn default() -> Self {
        Self::new(PuttySettings::default())
    }
}

/// Seam polyline with the tolerance beyond which the bead has slipped off.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeamPath {
    points: Vec<Vec3>,
    tolerance: f64,
}

pub const DEFAULT_SLIP_TOLERANCE: f64 = 0.005;

impl SeamPath {
    pub fn new(points: Vec<Vec3>, tolerance: f64) -> Result<Self, SceneError> {
        if points.len() < 2 {
            return Err(SceneError::Invalid("seam needs at least 2 points".into()));
        }
        if let Some(i) = points.windows(2).position(|w| w[0] == w[1]) {
            return Err(SceneError::Invalid(format!(
                "seam points {i} and {} coincide",
                i + 1
            )));
        }
        if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(SceneError::Invalid("seam point is not finite".into()));
        }
        if !(tolerance > 0.0) {
            return Err(SceneError::Invalid("slip tolerance must be positive".into()));
        }
        Ok(Self { points, tolerance })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Point at arc length `s` from the start, clamped to the ends.
    pub fn point_at(&self, s: f64) -> Vec3 {
        let mut rest = s.max(0.0);
        for w in self.points.windows(2) {
            let len = (w[1] - w[0]).norm();
            if rest <= len {
                return w[0] + (w[1] - w[0]) * (rest / len);
            }
            rest -= len;
        }
        *self.points.last().unwrap()
    }

    pub fn distance_to(&self, p: &Vec3) -> f64 {
        self.points
            .windows(2)
            .map(|w| {
                let d = w[1] - w[0];
                let s = ((p - w[0]).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
                (p - (w[0] + d * s)).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Text format: one `x y z` point per line (whitespace or commas), `#`
    /// comments.
    pub fn parse(text: &str, tolerance: f64) -> Result<Self, SceneError> {
        let mut points = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|f| !f.is_empty())
                .collect();
            let parse_err = |message: String| SceneError::Parse {
                line: Some(n + 1),
                message,
            };
            if fields.len() != 3 {
                return Err(parse_err(format!("expected 3 fields, found {}", fields.len())));
            }
            let mut xyz = [0.0; 3];
            for (slot, f) in xyz.iter_mut().zip(&fields) {
                *slot = f
                    .parse()
                    .map_err(|_| parse_err(format!("bad number {f:?}")))?;
            }
            points.push(Vec3::from(xyz));
        }
        Self::new(points, tolerance)
    }

    pub fn load(path: impl AsRef<Path>, tolerance: f64) -> Result<Self, SceneError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SceneError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text, tolerance).map_err(|e| e.with_path(path))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# seam polyline, meters: x y z\n");
        for p in &self.points {
            let _ = writeln!(s, "{:?} {:?} {:?}", p.x, p.y, p.z);
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeamMetrics {
    /// Fraction of seam length with a bead sample within tolerance.
    pub coverage: f64,
    /// Largest distance from a bead sample to the seam (m).
    pub max_deviation: f64,
    /// Contiguous runs of bead samples farther than tolerance from the seam.
    pub slip_events: usize,
}

/// Metrics for a single bead.
pub fn seam_metrics(bead: &PuttyBead, seam: &SeamPath) -> SeamMetrics {
    seam_metrics_all(std::slice::from_ref(bead), seam)
}

/// Metrics for several beads: coverage pools all samples, slips add up.
pub fn seam_metrics_all(beads: &[PuttyBead], seam: &SeamPath) -> SeamMetrics {
    let tol = seam.tolerance;
    let mut max_deviation = 0.0f64;
    let mut slip_events = 0;
    for bead in beads {
        let mut in_slip = false;
        for s in &bead.samples {
            let d = seam.distance_to(&s.position);
            max_deviation = max_deviation.max(d);
            let off = d > tol;
            if off && !in_slip {
                slip_events += 1;
            }
            in_slip = off;
        }
    }

    let samples: Vec<Vec3> = beads
        .iter()
        .flat_map(|b| b.samples.iter().map(|s| s.position))
        .collect();
    let coverage = if samples.is_empty() {
        0.0
    } else {
        // midpoints of equal arc-length pieces no longer than tol / 10
        let length = seam.length();
        let pieces = (length / (tol / 10.0)).ceil().max(1.0) as usize;
        let h = length / pieces as f64;
        let tol_sq = tol * tol;
        let covered = (0..pieces)
            .filter(|&k| {
                let q = seam.point_at((k as f64 + 0.5) * h);
                samples.iter().any(|p| (p - q).norm_squared() <= tol_sq)
            })
            .count();
        covered as f64 / pieces as f64
    };
    SeamMetrics {
        coverage,
        max_deviation,
        slip_events,
    }
}
